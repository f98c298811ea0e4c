/* Licensed under the Apache-2.0 license */

#ifndef RIGEL_H
#define RIGEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Default load address for images.
 */
#define RIGEL_DEFAULT_BASE 65536

#define RIGEL_DEFAULT_RAM 1048576

#define RIGEL_MMIO_CLINT_MSIP 33554432

#define RIGEL_MMIO_CLINT_MTIMECMP 33570816

#define RIGEL_MMIO_CLINT_MTIME 33603576

#define RIGEL_MMIO_UART 268435456

#define RIGEL_MMIO_FINISHER 286261248

#define RIGEL_MMIO_TRACE_PORT 287309824

#define RIGEL_MMIO_IRQ_LATCH 288358400

/**
 * Finisher values: pass, and the low half of `(code << 16) | FAIL`.
 */
#define RIGEL_FINISHER_PASS 21845

#define RIGEL_FINISHER_FAIL 13107

/**
 * Trace word event types, stored in bits 31:24.
 */
#define RIGEL_EVT_OUTPUT 1

#define RIGEL_EVT_TASK_SWITCH 2

#define RIGEL_EVT_SIGNAL_SEND 3

#define RIGEL_EVT_SIGNAL_RECV 4

#define RIGEL_EVT_MUTEX_LOCK 5

#define RIGEL_EVT_MUTEX_BLOCK 6

#define RIGEL_EVT_MUTEX_UNLOCK 7

#define RIGEL_EVT_SLEEP 8

#define RIGEL_EVT_TICK 9

#define RIGEL_EVT_MSG_PUT 10

#define RIGEL_EVT_MSG_GET 11

#define RIGEL_EVT_IRQ_RAISE 12

#define RIGEL_EVT_EXIT 13

#define RIGEL_EVT_FAULT 14

/**
 * `TASK_SWITCH` argument meaning no task is runnable.
 */
#define RIGEL_IDLE_TASK 255

typedef enum RigelStatus {
  RIGEL_STATUS_OK = 0,
  RIGEL_STATUS_NULL_ARGUMENT = 1,
  RIGEL_STATUS_INVALID_UTF8 = 2,
  RIGEL_STATUS_ASSEMBLE = 3,
  RIGEL_STATUS_LINK = 4,
  RIGEL_STATUS_LOAD = 5,
  RIGEL_STATUS_INVALID_ARGUMENT = 6,
  RIGEL_STATUS_BUFFER_TOO_SMALL = 7,
  RIGEL_STATUS_NOT_FOUND = 8,
  RIGEL_STATUS_PANIC = 9,
} RigelStatus;

typedef enum RigelRunKind {
  RIGEL_RUN_KIND_NOT_RUN = 0,
  RIGEL_RUN_KIND_EXIT = 1,
  RIGEL_RUN_KIND_INSTRUCTION_LIMIT = 2,
  RIGEL_RUN_KIND_FAULT = 3,
} RigelRunKind;

/**
 * A linked memory image.
 */
typedef struct RigelImage RigelImage;

/**
 * A simulated hart with its RAM and devices.
 */
typedef struct RigelMachine RigelMachine;

/**
 * Summary of the last `rigel_machine_run`.
 */
typedef struct RigelRunSummary {
  enum RigelRunKind kind;
  /**
   * Exit code for `EXIT`, zero otherwise.
   */
  uint16_t exit_code;
  /**
   * Faulting pc for `FAULT`, zero otherwise.
   */
  uint32_t fault_pc;
  uint64_t instret;
  /**
   * Number of trace events recorded so far.
   */
  size_t events;
} RigelRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *rigel_last_error(void);

/**
 * Assembles `count` source units and links them at `base` with `ram_size`
 * bytes of RAM (zero selects the defaults). `names` may be null, in which
 * case units are called `unit0`, `unit1`, ...
 *
 * # Safety
 * `sources` must point to `count` NUL-terminated strings, `names` to
 * `count` strings or be null, and `out` must be writable.
 */
enum RigelStatus rigel_image_build(const char *const *sources,
                                   const char *const *names,
                                   size_t count,
                                   uint32_t base,
                                   uint32_t ram_size,
                                   struct RigelImage **out);

/**
 * # Safety
 * `image` must come from `rigel_image_build` and not be freed yet, or be null.
 */
void rigel_image_free(struct RigelImage *image);

/**
 * # Safety
 * `image` must be a live handle.
 */
uint32_t rigel_image_entry(const struct RigelImage *image);

/**
 * # Safety
 * `image` must be a live handle.
 */
uint32_t rigel_image_base(const struct RigelImage *image);

/**
 * Borrowed view of the image bytes, valid while the handle lives.
 *
 * # Safety
 * `image` must be a live handle; `len` must be writable.
 */
const uint8_t *rigel_image_bytes(const struct RigelImage *image, size_t *len);

/**
 * # Safety
 * `image` must be a live handle, `name` a NUL-terminated string and
 * `addr` writable.
 */
enum RigelStatus rigel_image_symbol(const struct RigelImage *image,
                                    const char *name,
                                    uint32_t *addr);

/**
 * Writes the symbol map (`%08x name` lines) into `buf`. `needed` receives
 * the full length including the terminating NUL.
 *
 * # Safety
 * `image` must be a live handle, `buf` writable for `cap` bytes (or null
 * with `cap` zero) and `needed` writable.
 */
enum RigelStatus rigel_image_map(const struct RigelImage *image,
                                 char *buf,
                                 size_t cap,
                                 size_t *needed);

/**
 * Creates a hart with `ram_size` bytes of RAM (zero for the default) and
 * loads `image` at its base, with pc at the image entry.
 *
 * # Safety
 * `image` must be a live handle and `out` writable.
 */
enum RigelStatus rigel_machine_new(const struct RigelImage *image,
                                   uint32_t ram_size,
                                   struct RigelMachine **out);

/**
 * # Safety
 * `machine` must come from `rigel_machine_new` and not be freed yet, or be null.
 */
void rigel_machine_free(struct RigelMachine *machine);

/**
 * Schedules external interrupt `event` (0..15) to be latched once
 * `at` instructions have retired.
 *
 * # Safety
 * `machine` must be a live handle.
 */
enum RigelStatus rigel_machine_schedule_irq(struct RigelMachine *machine,
                                            uint8_t event,
                                            uint64_t at);

/**
 * Runs until the guest exits or faults, or until the retired count reaches
 * `max_instr`. A run stopped by the limit can be continued with a higher one.
 *
 * # Safety
 * `machine` must be a live handle and `summary` writable or null.
 */
enum RigelStatus rigel_machine_run(struct RigelMachine *machine,
                                   uint64_t max_instr,
                                   struct RigelRunSummary *summary);

/**
 * # Safety
 * `machine` must be a live handle and `value` writable.
 */
enum RigelStatus rigel_machine_reg(const struct RigelMachine *machine,
                                   uint32_t index,
                                   uint32_t *value);

/**
 * Reads a word of RAM.
 *
 * # Safety
 * `machine` must be a live handle and `value` writable.
 */
enum RigelStatus rigel_machine_read_word(const struct RigelMachine *machine,
                                         uint32_t addr,
                                         uint32_t *value);

/**
 * Copies the recorded trace as 32-bit words. `count` receives the number
 * of events; nothing is copied if `cap` is smaller.
 *
 * # Safety
 * `machine` must be a live handle, `words` writable for `cap` entries (or
 * null with `cap` zero) and `count` writable.
 */
enum RigelStatus rigel_machine_trace_words(const struct RigelMachine *machine,
                                           uint32_t *words,
                                           size_t cap,
                                           size_t *count);

/**
 * Writes the trace in its text form (`EVT NAME a0 a1` lines).
 *
 * # Safety
 * As for `rigel_image_map`.
 */
enum RigelStatus rigel_machine_trace_text(const struct RigelMachine *machine,
                                          char *buf,
                                          size_t cap,
                                          size_t *needed);

/**
 * Renders one trace word as `EVT NAME a0 a1`.
 *
 * # Safety
 * `buf` writable for `cap` bytes (or null with `cap` zero); `needed` writable.
 */
enum RigelStatus rigel_trace_word_text(uint32_t word, char *buf, size_t cap, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIGEL_H */

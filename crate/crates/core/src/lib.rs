// Licensed under the Apache-2.0 license

//! Workbench for a static, MMU-free RTOS on RV32IM.
//!
//! The pipeline mirrors a classic embedded build: `.prx` system descriptions
//! ([`prx`]) name the component modules and the static kernel configuration;
//! each module is assembled ([`asm`]), linked into a flat image at
//! `0x0001_0000` ([`link`]) and executed on a machine-mode instruction-set
//! simulator ([`sim`]). [`kernel`] is the host-side reference executive whose
//! event traces the guest kernel must reproduce, checked by [`conformance`].

pub mod isa;
pub mod kernel;
pub mod trace;
pub mod asm;
pub mod link;
pub mod sim;
pub mod prx;
pub mod conformance;
pub mod cli;

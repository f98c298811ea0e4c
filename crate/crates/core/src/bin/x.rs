// Licensed under the Apache-2.0 license

fn main() {
    std::process::exit(rigel_core::cli::main_from_env());
}

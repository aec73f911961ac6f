fn main() {
    std::process::exit(domd_core::cli::main_with_args(std::env::args_os()));
}

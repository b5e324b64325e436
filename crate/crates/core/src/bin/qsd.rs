fn main() {
    std::process::exit(qsd_core::cli::main_with(std::env::args_os()));
}

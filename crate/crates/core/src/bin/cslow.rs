fn main() {
    std::process::exit(cslow::cli::main_with_args(std::env::args_os()));
}

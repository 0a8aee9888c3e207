fn main() {
    std::process::exit(cbo::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(newfluence::cli::main_with_args(std::env::args_os()));
}

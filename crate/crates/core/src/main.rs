fn main() {
    std::process::exit(smallgan::cli::main_with_args(std::env::args_os()));
}

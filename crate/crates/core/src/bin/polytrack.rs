fn main() {
    std::process::exit(polytrack::cli::main_with_args(std::env::args_os()));
}

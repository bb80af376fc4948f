fn main() {
    std::process::exit(cameo::cli::main_with_args(std::env::args_os()));
}

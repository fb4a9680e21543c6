fn main() {
    std::process::exit(duio::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(locality::cli::main_with_args(std::env::args_os()));
}

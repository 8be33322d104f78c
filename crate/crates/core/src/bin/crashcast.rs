fn main() {
    std::process::exit(crashcast::cli::main_with_args(std::env::args_os()));
}

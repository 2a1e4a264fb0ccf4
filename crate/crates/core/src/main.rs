fn main() {
    std::process::exit(dtlab::cli::main_with_args(std::env::args_os()));
}

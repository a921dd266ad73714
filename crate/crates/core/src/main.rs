fn main() {
    std::process::exit(sumhess::cli::main_with_args(std::env::args_os()));
}

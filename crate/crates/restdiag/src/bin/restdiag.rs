fn main() {
    std::process::exit(restdiag::cli::main_with(std::env::args_os()));
}

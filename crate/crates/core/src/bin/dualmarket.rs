fn main() {
    std::process::exit(dualmarket::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(netdiff::cli::main_with_args(std::env::args_os()));
}

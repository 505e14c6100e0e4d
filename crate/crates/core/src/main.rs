fn main() {
    std::process::exit(herdmetric::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(mps_capacity::cli::main_with_args(std::env::args_os()));
}

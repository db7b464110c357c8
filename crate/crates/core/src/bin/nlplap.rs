fn main() {
    std::process::exit(nonlocal_plap::cli::main_with_args(std::env::args_os()));
}

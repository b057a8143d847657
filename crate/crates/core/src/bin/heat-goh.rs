fn main() {
    std::process::exit(heat_goh::cli::main_from_args(std::env::args_os()));
}

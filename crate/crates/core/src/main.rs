fn main() {
    std::process::exit(orthostat::cli::main_with_args(std::env::args_os()));
}

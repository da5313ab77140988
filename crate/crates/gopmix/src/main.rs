fn main() {
    std::process::exit(gopmix::cli::main_with_args(std::env::args_os()));
}

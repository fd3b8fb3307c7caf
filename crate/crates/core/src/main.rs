fn main() {
    std::process::exit(temporal_squeeze::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(trendcpd::cli::main_with_args(std::env::args_os()));
}

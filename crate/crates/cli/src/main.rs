fn main() {
    std::process::exit(mesbench_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(scanlab::cli::run(std::env::args_os()));
}

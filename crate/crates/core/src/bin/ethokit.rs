fn main() {
    std::process::exit(ethokit::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(qapm::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(ghzcert::cli::run(std::env::args_os()));
}

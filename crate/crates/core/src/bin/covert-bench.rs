fn main() {
    std::process::exit(covert_mimo::cli::run(std::env::args_os()));
}

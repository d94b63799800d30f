fn main() {
    std::process::exit(alphasens::cli::run(std::env::args_os()));
}

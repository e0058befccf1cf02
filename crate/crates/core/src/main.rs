fn main() {
    std::process::exit(renewal_dividend::cli::run(std::env::args_os()));
}

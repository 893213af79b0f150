fn main() {
    std::process::exit(conjucode::cli::run(std::env::args_os()));
}

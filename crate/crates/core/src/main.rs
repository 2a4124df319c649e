fn main() {
    std::process::exit(speccov::cli::run(std::env::args_os()));
}

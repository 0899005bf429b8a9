fn main() {
    std::process::exit(arclen::cli::run(std::env::args_os()));
}

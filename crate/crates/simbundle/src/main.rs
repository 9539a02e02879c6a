fn main() {
    std::process::exit(simbundle::cli::run(std::env::args_os()));
}

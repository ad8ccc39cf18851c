fn main() {
    std::process::exit(polyagraph::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(lenbeam::cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(selfonn_cli::run(std::env::args_os()));
}

fn main() {
    std::process::exit(knn_lens::cli::main(std::env::args_os()));
}

fn main() {
    std::process::exit(jive_embeddings::cli::run(std::env::args_os()));
}

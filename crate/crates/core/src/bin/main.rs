fn main() {
    std::process::exit(qa_reward::cli::run(std::env::args_os()));
}

fn main() { cfou::cli::run() }

fn main() {
    std::process::exit(voicelike::cli::main_with_args(std::env::args_os()));
}

fn main() {
    std::process::exit(gesture_core::cli::main_with_args(std::env::args_os()));
}

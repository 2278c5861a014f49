fn main() {
    // Die quietly when a downstream pipe closes (plan --dot | head), instead
    // of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(pipelens::cli::run_cli());
}

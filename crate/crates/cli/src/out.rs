//! Progress and report printing that tolerates a closed stdout. Consumers
//! like `head` hang up early; the file outputs a command produces must not
//! depend on whether anyone is still reading the console.

use std::io::{self, Write};

pub fn emit(text: &str) {
    let _ = io::stdout().write_all(text.as_bytes());
}

pub fn emit_line(text: &str) {
    emit(text);
    emit("\n");
}

//! Glob patterns with capturing wildcards.
//!
//! `*` matches within one path component, `**` across components and `?` a
//! single character. Every wildcard is a capture group, numbered from 1 in
//! order of appearance, so `libz.so.*` captures `1.2.8` from
//! `libz.so.1.2.8` as group 1.

use regex::Regex;

pub fn glob_to_regex_body(glob: &str) -> String {
    let mut out = String::new();
    let mut chars = glob.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '*' if chars.peek() == Some(&'*') => {
                chars.next();
                out.push_str("(.*)");
            }
            '*' => out.push_str("([^/]*)"),
            '?' => out.push_str("([^/])"),
            c => out.push_str(&regex::escape(&c.to_string())),
        }
    }
    out
}

pub fn wildcard_count(glob: &str) -> usize {
    let mut n = 0;
    let mut chars = glob.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '*' => {
                if chars.peek() == Some(&'*') {
                    chars.next();
                }
                n += 1;
            }
            '?' => n += 1,
            _ => {}
        }
    }
    n
}

/// Regex matching a whole basename.
pub fn filename_regex(glob: &str) -> Result<Regex, regex::Error> {
    Regex::new(&format!("^{}$", glob_to_regex_body(glob)))
}

/// Regex matching a relative path whose trailing components equal the glob.
pub fn path_regex(glob: &str) -> Result<Regex, regex::Error> {
    let body = glob_to_regex_body(glob.trim_start_matches('/'));
    Regex::new(&format!("(?:^|/){}$", body))
}

//! Surface-text normalization applied to every raw attribute value.

/// Options for [`normalize_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    /// Strip plural suffixes per token (light stemmer, off by default).
    pub stem: bool,
}

fn is_edge_punct(c: char) -> bool {
    c.is_whitespace()
        || matches!(
            c,
            '.' | ','
                | ';'
                | ':'
                | '!'
                | '?'
                | '\''
                | '"'
                | '`'
                | '('
                | ')'
                | '['
                | ']'
                | '{'
                | '}'
                | '<'
                | '>'
                | '*'
                | '_'
                | '-'
                | '~'
                | '/'
                | '\\'
                | '|'
                | '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
        )
}

/// Lowercases, trims, collapses whitespace runs and strips surrounding
/// punctuation. Stemming disabled.
pub fn normalize_text(s: &str) -> String {
    normalize_with(s, NormalizeOptions::default())
}

pub fn normalize_with(s: &str, opts: NormalizeOptions) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_matches(is_edge_punct);
    if !opts.stem {
        return trimmed.to_string();
    }
    trimmed
        .split(' ')
        .map(stem_token)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Plural-suffix stripper.
///
/// Only strips when the character before the suffix is alphabetic, so the
/// result never ends in punctuation and a second pass is a no-op.
pub fn stem_token(token: &str) -> String {
    let chars: Vec<char> = token.chars().collect();
    let n = chars.len();
    let ends = |suffix: &str| token.ends_with(suffix);
    let alpha_before = |k: usize| n > k && chars[n - k - 1].is_alphabetic();

    if ends("sses") {
        return chars[..n - 2].iter().collect();
    }
    if ends("ies") && n > 4 && alpha_before(3) {
        let mut out: String = chars[..n - 3].iter().collect();
        out.push('y');
        return out;
    }
    if ends("xes") || ends("zes") || ends("ches") || ends("shes") {
        return chars[..n - 2].iter().collect();
    }
    if ends("ss") || ends("us") || ends("is") {
        return token.to_string();
    }
    if ends("s") && n > 3 && alpha_before(1) {
        return chars[..n - 1].iter().collect();
    }
    token.to_string()
}

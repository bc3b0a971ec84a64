use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerMode {
    Whitespace,
    /// Every CJK codepoint is its own token; other runs split on whitespace.
    #[default]
    CharCjk,
}

pub fn tokenize(text: &str, mode: TokenizerMode) -> Vec<String> {
    match mode {
        TokenizerMode::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
        TokenizerMode::CharCjk => {
            let mut out = Vec::new();
            let mut run = String::new();
            for ch in text.chars() {
                if ch.is_whitespace() || is_cjk(ch) {
                    if !run.is_empty() {
                        out.push(std::mem::take(&mut run));
                    }
                    if !ch.is_whitespace() {
                        out.push(ch.to_string());
                    }
                } else {
                    run.push(ch);
                }
            }
            if !run.is_empty() {
                out.push(run);
            }
            out
        }
    }
}

fn is_cjk(ch: char) -> bool {
    matches!(ch as u32,
        0x3000..=0x303F     // symbols and punctuation
        | 0x3040..=0x30FF   // kana
        | 0x3400..=0x4DBF   // extension A
        | 0x4E00..=0x9FFF   // unified ideographs
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0xFF00..=0xFFEF   // full-width forms
        | 0x20000..=0x2FA1F)
}

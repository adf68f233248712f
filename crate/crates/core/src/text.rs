//! Tokenization shared by hypotheses, explanations and submission checks.

/// Splits `text` into lowercase tokens. Punctuation characters are detached
/// from words and become tokens of their own; apostrophes inside a word are
/// kept so that "doesn't" stays one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &ch) in chars.iter().enumerate() {
            let inner_apostrophe = ch == '\''
                && i > 0
                && i + 1 < chars.len()
                && chars[i - 1].is_alphanumeric()
                && chars[i + 1].is_alphanumeric();
            if is_punctuation(ch) && !inner_apostrophe {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_lowercase().collect());
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Tokens of `text` with punctuation-only tokens removed. This is the form
/// used for word matching and copy detection.
pub fn normalized_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| normalize_token(&t))
        .collect()
}

/// Normalized form of a single token, or `None` when nothing but punctuation
/// remains.
pub fn normalize_token(token: &str) -> Option<String> {
    let word: String = token
        .chars()
        .filter(|c| !is_punctuation(*c))
        .flat_map(char::to_lowercase)
        .collect();
    (!word.is_empty()).then_some(word)
}

fn is_punctuation(ch: char) -> bool {
    ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detaches_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("A man, playing Violin!"),
            vec!["a", "man", ",", "playing", "violin", "!"]
        );
    }

    #[test]
    fn keeps_inner_apostrophe() {
        assert_eq!(
            tokenize("Just because it's red doesn't mean 'hot'"),
            vec!["just", "because", "it's", "red", "doesn't", "mean", "'", "hot", "'"]
        );
    }

    #[test]
    fn normalized_words_drop_punctuation() {
        assert_eq!(normalized_words("There is no dog."), vec!["there", "is", "no", "dog"]);
        assert_eq!(normalize_token("..."), None);
        assert_eq!(normalize_token("Dog"), Some("dog".into()));
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n").is_empty());
    }
}

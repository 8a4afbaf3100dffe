//! Rule-based verb-phrase chunker for pulling candidate actions out of
//! transcript cues.
//!
//! This is a best-effort stand-in for a constituency parser: a mention is
//! a run of tokens starting at a verb and ending at a conjunction, a
//! subject pronoun, clause punctuation, or the start of another verb phrase.
//! Output is noisy and meant to be reviewed.

use super::{ActionMention, Transcript};
use std::collections::HashSet;
use std::sync::OnceLock;

const BASE_VERBS: &[&str] = &[
    "add", "apply", "arrange", "bake", "blend", "boil", "brush", "build", "buy", "call", "carry", "change", "check",
    "chop", "clean", "close", "comb", "cook", "cover", "cut", "dance", "do", "drain", "draw", "dress", "drink",
    "drive", "dry", "dust", "eat", "empty", "feed", "fill", "finish", "fix", "fold", "fry", "get", "give", "go",
    "grab", "grate", "grind", "hang", "heat", "help", "hold", "iron", "jump", "knead", "lay", "lift", "light",
    "load", "lock", "make", "melt", "mix", "mop", "move", "open", "organize", "pack", "paint", "peel", "pick",
    "place", "plant", "play", "polish", "pour", "prepare", "press", "pull", "push", "put", "read", "remove",
    "rinse", "roll", "run", "scrub", "serve", "set", "shave", "shower", "shop", "sit", "slice", "sort", "spray",
    "spread", "sprinkle", "squeeze", "stand", "start", "stir", "store", "stretch", "sweep", "switch", "take",
    "throw", "toss", "turn", "unload", "unpack", "use", "vacuum", "walk", "wash", "watch", "water", "wear",
    "whisk", "wipe", "work", "wrap", "write",
];

const IRREGULAR_FORMS: &[&str] = &[
    "did", "done", "does", "doing", "went", "gone", "goes", "got", "gotten", "gave", "given", "made", "took",
    "taken", "ate", "eaten", "drank", "drunk", "drove", "driven", "wrote", "written", "ran", "put", "set", "cut",
    "read", "held", "hung", "laid", "lit", "sat", "stood", "threw", "thrown", "wore", "worn", "bought", "brought",
    "bring", "brings", "bringing", "built", "fed", "ground", "swept", "spread",
];

const CONJUNCTIONS: &[&str] = &[
    "and", "but", "or", "then", "so", "because", "while", "when", "if", "which", "after", "before", "until",
];

const SUBJECT_PRONOUNS: &[&str] = &["i", "we", "you", "he", "she", "they", "it's", "i'm", "we're", "you're"];

/// Words after which a verb-looking token is read as a noun ("some reading").
const NOUN_CONTEXT: &[&str] = &[
    "a", "an", "the", "my", "your", "his", "her", "our", "their", "its", "this", "that", "these", "those", "some",
    "any", "of", "half", "more", "no", "every", "each",
];

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn inflections(base: &str) -> Vec<String> {
    let b = base.as_bytes();
    let n = b.len();
    let last = b[n - 1];
    let mut out = vec![base.to_string()];

    if base.ends_with('s') || base.ends_with('x') || base.ends_with("ch") || base.ends_with("sh") || base.ends_with('o') {
        out.push(format!("{base}es"));
    } else if last == b'y' && n > 1 && !is_vowel(b[n - 2]) {
        out.push(format!("{}ies", &base[..n - 1]));
    } else {
        out.push(format!("{base}s"));
    }

    let cvc = n >= 3
        && n <= 4
        && !is_vowel(last)
        && !matches!(last, b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 3]);
    if cvc {
        let doubled = format!("{base}{}", last as char);
        out.push(format!("{doubled}ing"));
        out.push(format!("{doubled}ed"));
    } else if last == b'e' && !base.ends_with("ee") {
        out.push(format!("{}ing", &base[..n - 1]));
        out.push(format!("{base}d"));
    } else if last == b'y' && n > 1 && !is_vowel(b[n - 2]) {
        out.push(format!("{base}ing"));
        out.push(format!("{}ied", &base[..n - 1]));
    } else {
        out.push(format!("{base}ing"));
        out.push(format!("{base}ed"));
    }
    out
}

fn lexicon() -> &'static HashSet<String> {
    static LEXICON: OnceLock<HashSet<String>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        BASE_VERBS
            .iter()
            .flat_map(|v| inflections(v))
            .chain(IRREGULAR_FORMS.iter().map(|s| s.to_string()))
            .collect()
    })
}

/// Whether `word` (lowercase, unpunctuated) is in the bundled verb lexicon.
pub fn is_lexicon_verb(word: &str) -> bool {
    lexicon().contains(word)
}

struct Token<'a> {
    word: &'a str,
    norm: String,
    ends_clause: bool,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    text.split_whitespace()
        .filter_map(|raw| {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            if word.is_empty() {
                return None;
            }
            let ends_clause = raw.ends_with(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?'));
            Some(Token {
                word,
                norm: word.to_lowercase(),
                ends_clause,
            })
        })
        .collect()
}

fn chunk_cue(tokens: &[Token<'_>], is_verb: &dyn Fn(usize, &Token<'_>) -> bool) -> Vec<String> {
    let mut mentions = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let mut prev_norm = String::new();
    let mut prev_verb = false;

    let flush = |run: &mut Vec<&str>, mentions: &mut Vec<String>| {
        if !run.is_empty() {
            mentions.push(run.join(" "));
            run.clear();
        }
    };

    for (i, tok) in tokens.iter().enumerate() {
        let verb = is_verb(i, tok);
        if run.is_empty() {
            if verb {
                run.push(tok.word);
            }
        } else if CONJUNCTIONS.contains(&tok.norm.as_str()) || SUBJECT_PRONOUNS.contains(&tok.norm.as_str()) {
            flush(&mut run, &mut mentions);
        } else if verb && !prev_verb && prev_norm != "to" && !NOUN_CONTEXT.contains(&prev_norm.as_str()) {
            flush(&mut run, &mut mentions);
            run.push(tok.word);
        } else {
            run.push(tok.word);
        }
        prev_verb = verb && !NOUN_CONTEXT.contains(&prev_norm.as_str());
        prev_norm = tok.norm.clone();
        if tok.ends_clause {
            flush(&mut run, &mut mentions);
            prev_norm.clear();
            prev_verb = false;
        }
    }
    flush(&mut run, &mut mentions);
    mentions
}

/// Extracts verb-phrase mentions from every cue of `t`.
///
/// `pos_tags`, when given, holds one tag list per cue aligned with the
/// cue's punctuation-stripped tokens; Penn tags starting with `VB` mark
/// verbs. Without tags the bundled verb lexicon is used. Mention ids are
/// `<video_id>_a<k>` in transcript order.
pub fn extract_candidate_actions(t: &Transcript, pos_tags: Option<&[Vec<String>]>) -> Vec<ActionMention> {
    let mut out = Vec::new();
    for (ci, cue) in t.cues.iter().enumerate() {
        let tokens = tokenize(&cue.text);
        let tags = pos_tags.and_then(|tags| tags.get(ci));
        let is_verb = |i: usize, tok: &Token<'_>| match tags {
            Some(tags) => tags.get(i).is_some_and(|tag| tag.starts_with("VB")),
            None => is_lexicon_verb(&tok.norm),
        };
        for text in chunk_cue(&tokens, &is_verb) {
            out.push(ActionMention {
                id: format!("{}_a{}", t.video_id, out.len()),
                text,
                cue_index: ci,
                gold_visible: None,
                gold_interval: None,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::TimeInterval;
    use crate::transcript::SubtitleCue;

    fn transcript(lines: &[&str]) -> Transcript {
        let cues = lines
            .iter()
            .enumerate()
            .map(|(i, l)| SubtitleCue {
                index: i,
                interval: TimeInterval::new(i as f64 * 5.0, i as f64 * 5.0 + 4.0).unwrap(),
                text: l.to_string(),
            })
            .collect();
        Transcript::new("vid", 100.0, cues)
    }

    fn texts(t: &Transcript) -> Vec<String> {
        extract_candidate_actions(t, None).into_iter().map(|m| m.text).collect()
    }

    #[test]
    fn splits_on_conjunction() {
        let t = transcript(&["I grab my Kindle and do some reading"]);
        assert_eq!(texts(&t), ["grab my Kindle", "do some reading"]);
    }

    #[test]
    fn whole_cue_phrase() {
        let t = transcript(&["add half cup of berries"]);
        assert_eq!(texts(&t), ["add half cup of berries"]);
    }

    #[test]
    fn no_verb_no_mentions() {
        let t = transcript(&["good morning everyone", ""]);
        assert!(texts(&t).is_empty());
    }

    #[test]
    fn clause_punctuation_ends_a_mention() {
        let t = transcript(&["so first, wash the dishes. Then I'm going to cook dinner"]);
        assert_eq!(texts(&t), ["wash the dishes", "going to cook dinner"]);
    }

    #[test]
    fn mentions_carry_cue_index_and_ids() {
        let t = transcript(&["hello", "I sweep the floor"]);
        let m = extract_candidate_actions(&t, None);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].cue_index, 1);
        assert_eq!(m[0].id, "vid_a0");
    }

    #[test]
    fn pos_tags_override_lexicon() {
        let t = transcript(&["I frobnicate the widget"]);
        let tags = vec![vec!["PRP".to_string(), "VBP".into(), "DT".into(), "NN".into()]];
        let m = extract_candidate_actions(&t, Some(&tags));
        assert_eq!(m[0].text, "frobnicate the widget");
    }

    #[test]
    fn inflected_forms_are_known() {
        for w in ["grabbing", "grabbed", "makes", "making", "washes", "dried", "cooked", "chopping"] {
            assert!(is_lexicon_verb(w), "{w}");
        }
        assert!(!is_lexicon_verb("kindle"));
    }
}

//! Brand masking for suggestion texts: a case-insensitive block list plus
//! URL and trademark-mark patterns.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::textproc::AdText;
use crate::{Error, Result};

pub const DEFAULT_PLACEHOLDER: &str = "[BRAND]";
pub const URL_PLACEHOLDER: &str = "[URL]";

/// Case folding applied per character, so offsets map back to the input.
fn fold(c: char) -> String {
    c.to_lowercase().collect()
}

fn fold_str(s: &str) -> String {
    s.chars().map(fold).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockList {
    /// Folded entries, longest first (by chars), ties lexicographic.
    entries: Vec<String>,
    placeholder: String,
    by_first: HashMap<char, Vec<usize>>,
}

impl BlockList {
    /// Entries are trimmed of surrounding non-alphanumeric characters and
    /// case folded; blanks and duplicates are dropped.
    pub fn new(entries: impl IntoIterator<Item = impl AsRef<str>>, placeholder: &str) -> Result<Self> {
        let folded_placeholder = fold_str(placeholder);
        let mut list: Vec<String> = Vec::new();
        for e in entries {
            let raw = fold_str(e.as_ref().trim());
            if raw == folded_placeholder || raw == fold_str(URL_PLACEHOLDER) {
                return Err(Error::InvalidArgument(format!("block list entry {raw:?} equals a placeholder")));
            }
            let e = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let e = e.split_whitespace().collect::<Vec<_>>().join(" ");
            if e.is_empty() {
                continue;
            }
            list.push(e);
        }
        if placeholder.trim().is_empty() {
            return Err(Error::InvalidArgument("placeholder must not be blank".into()));
        }
        list.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
        list.dedup();
        let mut by_first: HashMap<char, Vec<usize>> = HashMap::new();
        for (i, e) in list.iter().enumerate() {
            by_first.entry(e.chars().next().expect("non-empty")).or_default().push(i);
        }
        Ok(BlockList {
            entries: list,
            placeholder: placeholder.to_string(),
            by_first,
        })
    }

    /// One entry per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let lines = text.lines().map(|l| l.split('#').next().unwrap_or("").trim());
        BlockList::new(lines, DEFAULT_PLACEHOLDER)
    }

    pub fn load(path: &Path) -> Result<Self> {
        BlockList::parse(&std::fs::read_to_string(path)?)
    }

    pub fn empty() -> Self {
        BlockList::new(std::iter::empty::<&str>(), DEFAULT_PLACEHOLDER).expect("empty list is valid")
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn placeholder(&self) -> &str {
        &self.placeholder
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(?:https?://|www\.)[^\s\[\]]+|\b[a-z0-9][a-z0-9-]*(?:\.[a-z0-9-]+)*\.(?:com|net|org|io|co|biz|info|shop|store|us|uk)\b(?:/[^\s\[\]]*)?",
        )
        .expect("valid regex")
    })
}

fn trademark_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\p{Lu}[\p{L}\p{N}'&-]*(?:[ \t]+\p{Lu}[\p{L}\p{N}'&-]*)*[ \t]*[™®]").expect("valid regex")
    })
}

/// Text split into masked (placeholder) and free segments.
struct Segments(Vec<(bool, String)>);

impl Segments {
    fn new(text: &str, placeholders: &[&str]) -> Self {
        let mut out = vec![(false, text.to_string())];
        for p in placeholders {
            out = out
                .into_iter()
                .flat_map(|(masked, s)| {
                    if masked {
                        return vec![(true, s)];
                    }
                    let mut parts = Vec::new();
                    let mut rest = s.as_str();
                    while let Some(i) = rest.find(p) {
                        if i > 0 {
                            parts.push((false, rest[..i].to_string()));
                        }
                        parts.push((true, p.to_string()));
                        rest = &rest[i + p.len()..];
                    }
                    if !rest.is_empty() {
                        parts.push((false, rest.to_string()));
                    }
                    parts
                })
                .collect();
        }
        Segments(out)
    }

    /// Applies `f` to free segments only.
    fn map_free(self, mut f: impl FnMut(&str) -> String) -> String {
        self.0
            .into_iter()
            .map(|(masked, s)| if masked { s } else { f(&s) })
            .collect()
    }
}

/// Char-aligned view of `s` with the byte offset of every char in the folded
/// string.
struct Folded {
    chars: Vec<char>,
    folded: String,
    /// `offsets[i]` = start of char `i` in `folded`; one trailing entry.
    offsets: Vec<usize>,
}

impl Folded {
    fn new(s: &str) -> Self {
        let chars: Vec<char> = s.chars().collect();
        let mut folded = String::with_capacity(s.len());
        let mut offsets = Vec::with_capacity(chars.len() + 1);
        for &c in &chars {
            offsets.push(folded.len());
            folded.push_str(&fold(c));
        }
        offsets.push(folded.len());
        Folded {
            chars,
            folded,
            offsets,
        }
    }

    fn boundary_before(&self, i: usize) -> bool {
        i == 0 || !self.chars[i - 1].is_alphanumeric()
    }

    fn boundary_after(&self, j: usize) -> bool {
        j == self.chars.len() || !self.chars[j].is_alphanumeric()
    }

    /// Char index where a match of `entry` starting at char `i` ends, if it
    /// ends on a char boundary.
    fn match_end(&self, i: usize, entry: &str) -> Option<usize> {
        let start = self.offsets[i];
        if !self.folded[start..].starts_with(entry) {
            return None;
        }
        self.offsets[i..].binary_search(&(start + entry.len())).ok().map(|k| i + k)
    }
}

/// Finds block-list hits left to right, longest entry first at each start.
fn blocklist_hits(text: &str, list: &BlockList) -> Vec<(usize, usize)> {
    let f = Folded::new(text);
    let mut hits = Vec::new();
    let mut i = 0;
    while i < f.chars.len() {
        if f.boundary_before(i) {
            let first = f.folded[f.offsets[i]..].chars().next();
            let cands = first.and_then(|c| list.by_first.get(&c));
            let found = cands.into_iter().flatten().find_map(|&e| {
                f.match_end(i, &list.entries[e]).filter(|&j| f.boundary_after(j))
            });
            if let Some(j) = found {
                hits.push((i, j));
                i = j;
                continue;
            }
        }
        i += 1;
    }
    hits
}

fn replace_char_spans(text: &str, spans: &[(usize, usize)], with: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for &(i, j) in spans {
        out.extend(&chars[at..i]);
        out.push_str(with);
        at = j;
    }
    out.extend(&chars[at..]);
    out
}

/// Masks URLs, capitalized spans marked ™ or ®, and block-list entries.
/// Placeholders already present are left alone, which makes the operation
/// idempotent.
pub fn anonymize(text: &AdText, list: &BlockList) -> AdText {
    let placeholders = [list.placeholder.as_str(), URL_PLACEHOLDER];
    let s = Segments::new(text.as_str(), &placeholders).map_free(|s| url_re().replace_all(s, URL_PLACEHOLDER).into_owned());
    let s = Segments::new(&s, &placeholders).map_free(|s| trademark_re().replace_all(s, list.placeholder.as_str()).into_owned());
    let s = Segments::new(&s, &placeholders).map_free(|s| replace_char_spans(s, &blocklist_hits(s, list), &list.placeholder));
    AdText::new(s)
}

/// Block-list entries still present at word boundaries outside placeholders.
pub fn residual_entries(text: &AdText, list: &BlockList) -> Vec<String> {
    let mut found = Vec::new();
    Segments::new(text.as_str(), &[list.placeholder.as_str(), URL_PLACEHOLDER]).map_free(|s| {
        let f = Folded::new(s);
        for e in &list.entries {
            for i in 0..f.chars.len() {
                if f.boundary_before(i) && f.match_end(i, e).is_some_and(|j| f.boundary_after(j)) {
                    found.push(e.clone());
                }
            }
        }
        String::new()
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn anon(s: &str, entries: &[&str]) -> String {
        anonymize(&AdText::new(s), &BlockList::new(entries, DEFAULT_PLACEHOLDER).unwrap()).into_string()
    }

    #[test]
    fn direct_match() {
        assert_eq!(anon("Shop at Acme today", &["acme"]), "Shop at [BRAND] today");
        assert_eq!(anon("ACME deals. acme!", &["Acme"]), "[BRAND] deals. [BRAND]!");
    }

    #[test]
    fn clean_text_is_unchanged() {
        assert_eq!(anon("Fresh bread baked daily", &["acme"]), "Fresh bread baked daily");
    }

    /// Boundary oracle: an occurrence counts when its neighbors are not
    /// alphanumeric, checked with a regex built from the entry.
    fn boundary_oracle(text: &str, entry: &str) -> Vec<usize> {
        let re = Regex::new(&format!(r"(?i)(?:^|[^\p{{L}}\p{{N}}])({})(?:$|[^\p{{L}}\p{{N}}])", regex::escape(entry))).unwrap();
        let mut starts = Vec::new();
        let mut at = 0;
        while let Some(c) = re.captures_at(text, at) {
            let m = c.get(1).unwrap();
            starts.push(m.start());
            at = m.end();
        }
        starts
    }

    #[test]
    fn word_boundaries() {
        let text = "AcmeShoes and Acme Shoes";
        assert_eq!(boundary_oracle(text, "acme shoes"), vec![14]);
        assert_eq!(anon(text, &["acme shoes"]), "AcmeShoes and [BRAND]");
        assert_eq!(anon("superacme acme", &["acme"]), "superacme [BRAND]");
    }

    #[test]
    fn longest_entry_wins() {
        assert_eq!(anon("Acme Shoes sale", &["acme", "acme shoes"]), "[BRAND] sale");
    }

    #[test]
    fn urls_and_marks() {
        assert_eq!(anon("Visit https://acme.com/sale now", &[]), "Visit [URL] now");
        assert_eq!(anon("see www.foo-bar.net today", &[]), "see [URL] today");
        assert_eq!(anon("order at shoes.com", &[]), "order at [URL]");
        assert_eq!(anon("Get the Super Glide™ razor", &[]), "Get the [BRAND] razor");
        assert_eq!(anon("the new Zapp® formula", &[]), "the new [BRAND] formula");
        assert_eq!(anon("mixed case ™ stays", &[]), "mixed case ™ stays");
    }

    #[test]
    fn placeholder_text_is_protected() {
        assert_eq!(anon("[BRAND] and brand", &["brand"]), "[BRAND] and [BRAND]");
        let once = anon("Brand url", &["brand", "url"]);
        assert_eq!(once, "[BRAND] [BRAND]");
        assert_eq!(anon(&once, &["brand", "url"]), once);
    }

    #[test]
    fn blocklist_file_format() {
        let l = BlockList::parse("# brands\nAcme\n\n  Globex Corp  # trailing\nacme\n").unwrap();
        assert_eq!(l.entries(), &["globex corp", "acme"]);
        assert!(BlockList::parse("[brand]").is_err());
    }

    fn fuzz_corpus() -> (BlockList, Vec<String>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let syll = ["ac", "me", "zo", "ra", "glo", "bex", "ti", "ny", "Ül", "ß", "ka"];
        let word = |rng: &mut rand_chacha::ChaCha8Rng| -> String {
            (0..rng.random_range(1..4)).map(|_| syll[rng.random_range(0..syll.len())]).collect()
        };
        let entries: Vec<String> = (0..40)
            .map(|_| (0..rng.random_range(1..3)).map(|_| word(&mut rng)).collect::<Vec<_>>().join(" "))
            .collect();
        let list = BlockList::new(&entries, DEFAULT_PLACEHOLDER).unwrap();
        let seps = [" ", "  ", "-", ", ", ". ", "/", "™ ", "® ", " [BRAND] ", "'"];
        let texts = (0..500)
            .map(|_| {
                let mut t = String::new();
                for _ in 0..rng.random_range(1..12) {
                    let mut w = if rng.random_bool(0.3) {
                        entries[rng.random_range(0..entries.len())].clone()
                    } else {
                        word(&mut rng)
                    };
                    if rng.random_bool(0.3) {
                        w = w.to_uppercase();
                    } else if rng.random_bool(0.3) {
                        let mut c = w.chars();
                        w = c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default();
                    }
                    if rng.random_bool(0.05) {
                        w = format!("http://{w}.com/x");
                    }
                    t.push_str(&w);
                    t.push_str(seps[rng.random_range(0..seps.len())]);
                }
                t
            })
            .collect();
        (list, texts)
    }

    #[test]
    fn fuzz_idempotent_and_clean() {
        let (list, texts) = fuzz_corpus();
        for t in &texts {
            let once = anonymize(&AdText::new(t), &list);
            assert_eq!(anonymize(&once, &list), once, "input {t:?}");
            assert!(residual_entries(&once, &list).is_empty(), "input {t:?} -> {once}");
        }
    }

    proptest! {
        #[test]
        fn idempotent_on_arbitrary_text(s in "[a-zA-Z ÄÖß.™®/:\\[\\]-]{0,40}", e in "[a-z]{1,4}( [a-z]{1,3})?") {
            let list = BlockList::new([e.as_str()], DEFAULT_PLACEHOLDER).unwrap();
            let once = anonymize(&AdText::new(&s), &list);
            prop_assert_eq!(anonymize(&once, &list), once.clone());
            prop_assert!(residual_entries(&once, &list).is_empty());
        }
    }
}

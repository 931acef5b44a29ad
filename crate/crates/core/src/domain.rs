//! Shared data model: hands, finger classes, the key-finger map, tap
//! observations and phrase sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characters that can be typed with a finger tap.
pub const CHARSET: &str = "abcdefghijklmnopqrstuvwxyz'";

pub fn is_typable(c: char) -> bool {
    c.is_ascii_lowercase() || c == '\''
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const ALL: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

impl FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "left" => Ok(Hand::Left),
            "r" | "right" => Ok(Hand::Right),
            other => Err(Error::Format(format!("unknown hand {other:?}"))),
        }
    }
}

/// The six per-hand output classes of the tap classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerClass {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
    Palm,
}

impl FingerClass {
    pub const COUNT: usize = 6;

    pub const ALL: [FingerClass; 6] = [
        FingerClass::Thumb,
        FingerClass::Index,
        FingerClass::Middle,
        FingerClass::Ring,
        FingerClass::Pinky,
        FingerClass::Palm,
    ];

    pub const TYPING: [FingerClass; 4] = [
        FingerClass::Index,
        FingerClass::Middle,
        FingerClass::Ring,
        FingerClass::Pinky,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FingerClass> {
        Self::ALL.get(i).copied()
    }

    /// Whether characters may be assigned to this class.
    pub fn is_typing(self) -> bool {
        !matches!(self, FingerClass::Thumb | FingerClass::Palm)
    }

    pub fn name(self) -> &'static str {
        match self {
            FingerClass::Thumb => "thumb",
            FingerClass::Index => "index",
            FingerClass::Middle => "middle",
            FingerClass::Ring => "ring",
            FingerClass::Pinky => "pinky",
            FingerClass::Palm => "palm",
        }
    }
}

impl fmt::Display for FingerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FingerClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Format(format!("unknown finger class {s:?}")))
    }
}

/// One problem found by [`KeyFingerMap::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MapViolation {
    Uncovered(char),
    NonTypingClass { ch: char, hand: Hand, finger: FingerClass },
    Duplicate(char),
    ForeignCharacter(char),
}

impl fmt::Display for MapViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapViolation::Uncovered(c) => write!(f, "uncovered character {c}"),
            MapViolation::NonTypingClass { ch, hand, finger } => {
                write!(f, "character on non-typing class: {ch} -> {hand:?} {finger}")
            }
            MapViolation::Duplicate(c) => write!(f, "duplicate assignment for {c}"),
            MapViolation::ForeignCharacter(c) => write!(f, "character {c:?} outside the vocabulary"),
        }
    }
}

/// Deterministic assignment of characters to the (hand, finger) that types them.
///
/// Each character belongs to exactly one group, so the decoder can treat the
/// likelihood of a finger given a character as an indicator function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyFingerMap {
    assignments: Vec<(char, Hand, FingerClass)>,
    lookup: BTreeMap<char, (Hand, FingerClass)>,
    groups: BTreeMap<(Hand, FingerClass), Vec<char>>,
}

impl Default for KeyFingerMap {
    fn default() -> Self {
        Self::qwerty()
    }
}

impl KeyFingerMap {
    /// Standard QWERTY touch-typing assignment.
    pub fn qwerty() -> Self {
        use FingerClass::*;
        use Hand::*;
        let groups: [(Hand, FingerClass, &str); 8] = [
            (Left, Pinky, "qaz"),
            (Left, Ring, "wsx"),
            (Left, Middle, "edc"),
            (Left, Index, "rtfgvb"),
            (Right, Index, "yuhjnm"),
            (Right, Middle, "ik"),
            (Right, Ring, "ol"),
            (Right, Pinky, "p'"),
        ];
        let assignments = groups
            .iter()
            .flat_map(|&(h, f, chars)| chars.chars().map(move |c| (c, h, f)))
            .collect();
        Self::from_assignments_unchecked(assignments)
    }

    /// Builds a map without validating it; see [`KeyFingerMap::validate`].
    pub fn from_assignments_unchecked(assignments: Vec<(char, Hand, FingerClass)>) -> Self {
        let mut lookup = BTreeMap::new();
        let mut groups: BTreeMap<(Hand, FingerClass), Vec<char>> = BTreeMap::new();
        for &(c, h, f) in &assignments {
            lookup.entry(c).or_insert((h, f));
            groups.entry((h, f)).or_default().push(c);
        }
        for chars in groups.values_mut() {
            chars.sort_unstable();
            chars.dedup();
        }
        Self {
            assignments,
            lookup,
            groups,
        }
    }

    /// Builds a map and rejects it if any invariant is violated.
    pub fn from_assignments(assignments: Vec<(char, Hand, FingerClass)>) -> Result<Self> {
        let map = Self::from_assignments_unchecked(assignments);
        let violations = map.validate();
        if violations.is_empty() {
            Ok(map)
        } else {
            let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidMap(msg.join("; ")))
        }
    }

    /// Parses the text format: one `<char> <L|R> <finger>` line per character,
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut assignments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                // '#' is not a mappable character, so anything after it is a comment.
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::parse(i + 1, format!("expected 3 fields, got {}", fields.len())));
            }
            let mut chars = fields[0].chars();
            let c = match (chars.next(), chars.next()) {
                (Some(c), None) => c.to_ascii_lowercase(),
                _ => return Err(Error::parse(i + 1, "first field must be a single character")),
            };
            let hand = fields[1].parse().map_err(|e: Error| Error::parse(i + 1, e.to_string()))?;
            let finger = fields[2]
                .parse()
                .map_err(|e: Error| Error::parse(i + 1, e.to_string()))?;
            assignments.push((c, hand, finger));
        }
        Self::from_assignments(assignments)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# char hand finger\n");
        for &(c, h, f) in &self.assignments {
            let hand = if h == Hand::Left { "L" } else { "R" };
            out.push_str(&format!("{c} {hand} {f}\n"));
        }
        out
    }

    /// Every invariant violation, in a stable order. Empty means the map is valid.
    pub fn validate(&self) -> Vec<MapViolation> {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        for &(c, hand, finger) in &self.assignments {
            if !is_typable(c) {
                violations.push(MapViolation::ForeignCharacter(c));
            }
            if !seen.insert(c) {
                violations.push(MapViolation::Duplicate(c));
            }
            if !finger.is_typing() {
                violations.push(MapViolation::NonTypingClass { ch: c, hand, finger });
            }
        }
        for c in CHARSET.chars() {
            if !seen.contains(&c) {
                violations.push(MapViolation::Uncovered(c));
            }
        }
        violations
    }

    pub fn finger_for(&self, c: char) -> Option<(Hand, FingerClass)> {
        self.lookup.get(&c.to_ascii_lowercase()).copied()
    }

    /// The characters typed by `finger` of `hand`, sorted.
    pub fn characters_for(&self, hand: Hand, finger: FingerClass) -> Result<&[char]> {
        if !finger.is_typing() {
            return Err(Error::NonTypingFinger(finger));
        }
        Ok(self.groups.get(&(hand, finger)).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// All characters assigned to `hand`, sorted.
    pub fn characters_of_hand(&self, hand: Hand) -> Vec<char> {
        let mut out: Vec<char> = self
            .groups
            .iter()
            .filter(|((h, _), _)| *h == hand)
            .flat_map(|(_, cs)| cs.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn characters(&self) -> impl Iterator<Item = char> + '_ {
        self.lookup.keys().copied()
    }

    /// Finger sequence that types `word`, or `None` if a character is unmapped.
    pub fn fingers_for_word(&self, word: &str) -> Option<Vec<(Hand, FingerClass)>> {
        word.chars().map(|c| self.finger_for(c)).collect()
    }
}

/// Classifier output for one tap: a distribution over the six classes of one hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapObservation {
    pub hand: Hand,
    pub probs: [f64; FingerClass::COUNT],
    #[serde(default)]
    pub timestamp: u64,
}

impl TapObservation {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(hand: Hand, probs: [f64; FingerClass::COUNT]) -> Result<Self> {
        let obs = Self {
            hand,
            probs,
            timestamp: 0,
        };
        obs.check()?;
        Ok(obs)
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn one_hot(hand: Hand, finger: FingerClass) -> Self {
        let mut probs = [0.0; FingerClass::COUNT];
        probs[finger.index()] = 1.0;
        Self {
            hand,
            probs,
            timestamp: 0,
        }
    }

    /// Uniform over the four typing fingers, zero on thumb and palm.
    pub fn uniform_typing(hand: Hand) -> Self {
        let mut probs = [0.0; FingerClass::COUNT];
        for f in FingerClass::TYPING {
            probs[f.index()] = 0.25;
        }
        Self {
            hand,
            probs,
            timestamp: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidObservation(format!(
                "probabilities must be finite and non-negative: {:?}",
                self.probs
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidObservation(format!("probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn prob(&self, finger: FingerClass) -> f64 {
        self.probs[finger.index()]
    }

    /// Most probable class; ties resolve to the lower class index.
    pub fn argmax(&self) -> FingerClass {
        let mut best = 0;
        for i in 1..FingerClass::COUNT {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        FingerClass::ALL[best]
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Lowercases `text`, drops characters outside the typable set and collapses
/// whitespace. Returns `None` when the text contains digits.
pub fn normalize_text(text: &str) -> Option<String> {
    if text.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let lowered: String = text
        .chars()
        .map(|c| match c {
            '\u{2019}' => '\'',
            c => c.to_ascii_lowercase(),
        })
        .map(|c| if is_typable(c) || c.is_whitespace() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = lowered
        .split_whitespace()
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .collect();
    Some(words.join(" "))
}

/// Evaluation phrases: lowercase words over the typable characters, single spaces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhraseSet {
    phrases: Vec<String>,
}

impl PhraseSet {
    pub fn new(phrases: Vec<String>) -> Result<Self> {
        for p in &phrases {
            Self::check_phrase(p)?;
        }
        Ok(Self { phrases })
    }

    /// One phrase per line; blank lines are skipped, everything else must
    /// already be normalized.
    pub fn parse(text: &str) -> Result<Self> {
        let phrases = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .map(str::to_owned)
            .collect();
        Self::new(phrases)
    }

    fn check_phrase(p: &str) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidPhrase {
                phrase: p.to_owned(),
                reason: reason.to_owned(),
            })
        };
        if p.is_empty() {
            return fail("empty phrase");
        }
        if p.starts_with(' ') || p.ends_with(' ') {
            return fail("leading or trailing space");
        }
        if p.contains("  ") {
            return fail("empty word");
        }
        if let Some(c) = p.chars().find(|&c| c != ' ' && !is_typable(c)) {
            return fail(&format!("character {c:?} outside the vocabulary"));
        }
        Ok(())
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().flat_map(|p| p.split(' '))
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(chars: &[char]) -> BTreeSet<char> {
        chars.iter().copied().collect()
    }

    #[test]
    fn qwerty_groups() {
        let map = KeyFingerMap::qwerty();
        assert_eq!(
            set(map.characters_for(Hand::Left, FingerClass::Middle).unwrap()),
            set(&['e', 'd', 'c'])
        );
        assert_eq!(
            set(map.characters_for(Hand::Right, FingerClass::Ring).unwrap()),
            set(&['o', 'l'])
        );
        assert!(map.validate().is_empty());
    }

    #[test]
    fn groups_partition_the_charset() {
        let map = KeyFingerMap::qwerty();
        let mut union = BTreeSet::new();
        let mut total = 0;
        for hand in Hand::ALL {
            for finger in FingerClass::TYPING {
                let chars = map.characters_for(hand, finger).unwrap();
                total += chars.len();
                union.extend(chars.iter().copied());
            }
        }
        assert_eq!(total, 27);
        assert_eq!(union, CHARSET.chars().collect());
    }

    #[test]
    fn left_and_right_groups_are_disjoint() {
        let map = KeyFingerMap::qwerty();
        let left: BTreeSet<char> = map.characters_of_hand(Hand::Left).into_iter().collect();
        let right: BTreeSet<char> = map.characters_of_hand(Hand::Right).into_iter().collect();
        assert!(left.is_disjoint(&right));
        assert_eq!(left, "qazwsxedcrfvtgb".chars().collect());
    }

    #[test]
    fn thumb_has_no_characters() {
        let map = KeyFingerMap::qwerty();
        assert!(matches!(
            map.characters_for(Hand::Right, FingerClass::Thumb),
            Err(Error::NonTypingFinger(FingerClass::Thumb))
        ));
        assert!(map.characters_for(Hand::Left, FingerClass::Palm).is_err());
    }

    #[test]
    fn validate_reports_missing_q() {
        let mut a: Vec<_> = KeyFingerMap::qwerty().assignments.clone();
        a.retain(|&(c, _, _)| c != 'q');
        let v = KeyFingerMap::from_assignments_unchecked(a).validate();
        assert_eq!(v, vec![MapViolation::Uncovered('q')]);
        assert_eq!(v[0].to_string(), "uncovered character q");
    }

    #[test]
    fn validate_reports_thumb_assignment() {
        let mut a: Vec<_> = KeyFingerMap::qwerty().assignments.clone();
        for entry in a.iter_mut() {
            if entry.0 == 'a' {
                *entry = ('a', Hand::Left, FingerClass::Thumb);
            }
        }
        let v = KeyFingerMap::from_assignments_unchecked(a).validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("character on non-typing class"));
    }

    #[test]
    fn validate_reports_duplicates() {
        let mut a: Vec<_> = KeyFingerMap::qwerty().assignments.clone();
        a.push(('e', Hand::Right, FingerClass::Index));
        let v = KeyFingerMap::from_assignments_unchecked(a).validate();
        assert_eq!(v, vec![MapViolation::Duplicate('e')]);
    }

    #[test]
    fn map_text_round_trip() {
        let map = KeyFingerMap::qwerty();
        let parsed = KeyFingerMap::parse(&map.to_text()).unwrap();
        assert_eq!(parsed, map);
    }

    #[test]
    fn map_parse_errors_carry_line_numbers() {
        let err = KeyFingerMap::parse("# header\na L pinky\nb X index\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn observation_sum_checked() {
        assert!(TapObservation::new(Hand::Left, [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(TapObservation::new(Hand::Left, [0.5, 0.6, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(TapObservation::new(Hand::Left, [1.5, -0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn phrase_invariants() {
        assert!(PhraseSet::parse("the quick brown fox\nit's fine\n").is_ok());
        assert!(PhraseSet::new(vec![" lead".into()]).is_err());
        assert!(PhraseSet::new(vec!["two  spaces".into()]).is_err());
        assert!(PhraseSet::new(vec!["Caps".into()]).is_err());
        assert!(PhraseSet::new(vec!["digit 4".into()]).is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("Hello, World!  It’s me").as_deref(), Some("hello world it's me"));
        assert_eq!(normalize_text("route 66"), None);
    }

    #[test]
    fn bundled_phrases_are_valid() {
        let set = PhraseSet::parse(crate::DESK_PHRASES).unwrap();
        assert_eq!(set.len(), 50);
    }
}

//! Decode typed words from noisy finger observations: every key a finger
//! covers is a candidate, and the language models pick the words.

use taptype::classifier::{ConfusionClassifier, ConfusionMatrix, OutputMode};

fn main() -> taptype::Result<()> {
    let decoder = taptype::desk_decoder()?;
    let mut classifier = ConfusionClassifier::new(ConfusionMatrix::finger_confusion(0.85)?, OutputMode::Calibrated, 3);
    let mut committed: Vec<String> = Vec::new();
    for word in "she said that the meeting was over".split(' ') {
        let obs = word
            .chars()
            .map(|c| {
                let (hand, finger) = decoder.map().finger_for(c).expect("mapped key");
                classifier.observe(hand, finger, 0)
            })
            .collect::<Vec<_>>();
        let decoded = decoder.decode(&obs, &committed)?;
        let top: Vec<&str> = decoded.suggestions.iter().take(5).map(|s| s.word.as_str()).collect();
        println!("{word:>8}: {}", top.join(", "));
        committed.push(word.to_owned());
    }
    Ok(())
}

/// Names of the statistical text features, in emission order.
pub const TEXT_STAT_NAMES: [&str; 7] = [
    "char_count",
    "word_count",
    "tag_count",
    "mean_word_length",
    "digit_ratio",
    "uppercase_ratio",
    "hashtag_count",
];

/// Statistical features of a caption and its tags. Counts are over Unicode
/// scalar values; words are whitespace-delimited.
pub fn text_stats(caption: &str, tags: &[String]) -> [f64; 7] {
    let chars = caption.chars().count();
    let words: Vec<&str> = caption.split_whitespace().collect();
    let word_chars: usize = words.iter().map(|w| w.chars().count()).sum();
    let digits = caption.chars().filter(|c| c.is_numeric()).count();
    let upper = caption.chars().filter(|c| c.is_uppercase()).count();
    let hashtags = words.iter().filter(|w| w.starts_with('#') && w.len() > 1).count();
    let ratio = |n: usize| if chars == 0 { 0.0 } else { n as f64 / chars as f64 };
    [
        chars as f64,
        words.len() as f64,
        tags.len() as f64,
        if words.is_empty() {
            0.0
        } else {
            word_chars as f64 / words.len() as f64
        },
        ratio(digits),
        ratio(upper),
        hashtags as f64,
    ]
}

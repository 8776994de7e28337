//! Published ZhuangBench scores, printed next to measured values in report-only runs.
//! All numbers are corpus BLEU / chrF on the full test set unless a tag is given.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedCell {
    pub bleu: f64,
    pub chrf: Option<f64>,
}

const fn cell(bleu: f64, chrf: f64) -> Option<PublishedCell> {
    Some(PublishedCell { bleu, chrf: Some(chrf) })
}

const fn bleu_only(bleu: f64) -> Option<PublishedCell> {
    Some(PublishedCell { bleu, chrf: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedRow {
    /// `main`, `lexical-ablation`, `exemplar-strategy` or `monolingual`.
    pub table: &'static str,
    pub model: &'static str,
    pub variant: &'static str,
    pub zh2za: Option<PublishedCell>,
    pub za2zh: Option<PublishedCell>,
}

const fn row(
    table: &'static str,
    model: &'static str,
    variant: &'static str,
    zh2za: Option<PublishedCell>,
    za2zh: Option<PublishedCell>,
) -> PublishedRow {
    PublishedRow {
        table,
        model,
        variant,
        zh2za,
        za2zh,
    }
}

pub const PUBLISHED: &[PublishedRow] = &[
    row("main", "gpt-3.5", "direct", cell(0.3, 16.1), cell(0.3, 3.5)),
    row("main", "gpt-4", "direct", cell(0.0, 7.0), cell(1.4, 3.9)),
    row("main", "qwen-7b-chat", "dipmt", cell(1.8, 24.8), cell(8.3, 9.3)),
    row("main", "qwen-14b-chat", "dipmt", cell(4.4, 29.6), cell(12.7, 12.8)),
    row("main", "qwen-72b-chat", "dipmt", cell(5.1, 31.7), cell(16.3, 15.1)),
    row("main", "llama-2-7b-chat", "dipmt++", cell(5.9, 33.9), cell(9.7, 10.7)),
    row("main", "llama-2-13b-chat", "dipmt++", cell(9.0, 38.2), cell(10.7, 11.6)),
    row("main", "llama-2-70b-chat", "dipmt++", cell(9.3, 40.6), cell(12.7, 13.8)),
    row("main", "qwen-7b-chat", "dipmt++", cell(7.6, 36.9), cell(11.4, 14.3)),
    row("main", "qwen-14b-chat", "dipmt++", cell(12.6, 41.7), cell(19.5, 17.8)),
    row("main", "qwen-72b-chat", "dipmt++", cell(16.4, 45.1), cell(27.3, 26.4)),
    row("main", "gpt-3.5", "dipmt++", cell(13.3, 43.5), cell(20.1, 20.5)),
    row("main", "gpt-4", "dipmt++", cell(15.7, 46.1), cell(31.9, 29.1)),
    row("lexical-ablation", "qwen-14b-chat", "DiPMT++", cell(12.6, 41.7), cell(19.5, 17.8)),
    row("lexical-ablation", "qwen-14b-chat", "w/o Fuzzy", cell(9.1, 35.3), cell(18.9, 17.4)),
    row("lexical-ablation", "qwen-14b-chat", "w/o BLI", cell(10.1, 36.5), cell(12.2, 12.0)),
    row("lexical-ablation", "qwen-14b-chat", "w/o Synonym", cell(11.7, 38.7), cell(19.5, 17.8)),
    row("exemplar-strategy", "qwen-14b-chat", "Random", cell(9.2, 40.0), cell(14.7, 14.1)),
    row("exemplar-strategy", "qwen-14b-chat", "POS", cell(7.8, 30.1), cell(12.1, 12.8)),
    row("exemplar-strategy", "qwen-14b-chat", "BM25", cell(12.6, 41.7), cell(19.5, 17.8)),
    row("monolingual", "gpt-3.5", "DiPMT++", bleu_only(13.3), None),
    row("monolingual", "gpt-3.5", "+1K", bleu_only(14.2), None),
    row("monolingual", "gpt-3.5", "+2K", bleu_only(13.6), None),
    row("monolingual", "gpt-3.5", "+5K", bleu_only(13.1), None),
];

/// Per-difficulty zh2za BLEU (easy, medium, hard) for the monolingual-text rows.
pub const MONOLINGUAL_BY_TAG: &[(&str, [f64; 3])] = &[
    ("DiPMT++", [25.7, 11.3, 7.6]),
    ("+1K", [28.5, 11.3, 8.2]),
    ("+2K", [26.9, 13.1, 6.4]),
    ("+5K", [26.5, 11.6, 6.2]),
];

fn norm(s: &str) -> String {
    s.to_lowercase().replace(['_', ' '], "-")
}

/// Looks up a published row; model names match case-insensitively and with or
/// without the `-chat` suffix.
pub fn lookup(table: &str, model: &str, variant: &str) -> Option<&'static PublishedRow> {
    let m = norm(model);
    PUBLISHED.iter().find(|r| {
        r.table == table
            && (r.model == m || r.model.trim_end_matches("-chat") == m.trim_end_matches("-chat"))
            && norm(r.variant) == norm(variant)
    })
}

/// Published cell for one direction label (`zh2za`/`za2zh` or `zh-za`/`za-zh`).
pub fn cell_for(row: &PublishedRow, direction: &str) -> Option<PublishedCell> {
    match direction.replace('-', "2").as_str() {
        "zh2za" => row.zh2za,
        "za2zh" => row.za2zh,
        _ => None,
    }
}

pub fn rows_for(table: &str, model: &str) -> Vec<&'static PublishedRow> {
    let m = norm(model);
    PUBLISHED
        .iter()
        .filter(|r| r.table == table && r.model.trim_end_matches("-chat") == m.trim_end_matches("-chat"))
        .collect()
}

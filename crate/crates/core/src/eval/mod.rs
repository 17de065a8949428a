//! Automatic evaluation: corpus BLEU, surface statistics, and slot-error
//! reports.

pub mod bleu;
pub mod report;
pub mod slots;
pub mod surface;

pub use bleu::corpus_bleu;
pub use report::{quality_report, render_quality, render_slot_table, to_json, QualityReport};
pub use slots::{slot_errors, SlotErrorCounts, SlotErrorDetail, SlotErrorReport};
pub use surface::{sentence_count, surface_stats, word_count, SurfaceStats};

//! One simulated user's conversation with a recommender, from the first
//! prompt to the judged final list.

mod extract;

pub use extract::{extract_titles, ExtractError};
mod session;

pub use session::{
    evaluate_list, final_report, requested_count, run_session, scan_for_titles, RecommendationTurn, SessionContext,
    SessionError, SessionOutcome, SessionTranscript, EXTRACTION_RETRY_SUFFIX,
};

use serde::Serialize;

use vlat_core::temporal::{parse_duration, segment, SessionConfig};

use crate::config::{report_meta, FileConfig};
use crate::{CliError, SessionsArgs};

use super::{load_corpus, out_dir, write_json};

#[derive(Serialize)]
struct SessionsSettings {
    corpus: String,
    threshold: String,
    user: Option<String>,
    seed: u64,
}

#[derive(Serialize)]
struct SessionsSummary {
    meta: vlat_core::report::ReportMeta,
    threshold_secs: i64,
    users: usize,
    sessions: usize,
    single_post_sessions: usize,
    mean_posts_per_session: f64,
    mean_session_duration_secs: f64,
    /// Sessions cut off by the end of the data rather than by inactivity
    /// (each user's last session); reported, not corrected for.
    right_censored_sessions: usize,
}

pub fn run(args: &SessionsArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let threshold_text = args.threshold.clone();
    let threshold =
        parse_duration(&threshold_text).map_err(|e| CliError::Usage(e.to_string()))?;
    let session_config =
        SessionConfig::new(threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    let (corpus, _) = load_corpus(&args.corpus, config.corpus.format.as_deref())?;
    let users: Vec<String> = match &args.user {
        Some(user) => vec![user.clone()],
        None => corpus.user_ids().map(str::to_string).collect(),
    };
    let mut sessions = 0usize;
    let mut single_post = 0usize;
    let mut posts_total = 0usize;
    let mut duration_total = 0i64;
    let mut censored = 0usize;
    for user in &users {
        let timeline = corpus.timeline(user).map_err(super::corpus_error)?;
        let user_sessions = segment(&timeline, &session_config);
        sessions += user_sessions.len();
        censored += usize::from(!user_sessions.is_empty());
        for session in &user_sessions {
            posts_total += session.len();
            duration_total += session.duration_secs();
            single_post += usize::from(session.len() == 1);
        }
    }
    if sessions == 0 {
        return Err(CliError::Usage("corpus has no posts to segment".into()));
    }
    let settings = SessionsSettings {
        corpus: args.corpus.display().to_string(),
        threshold: threshold_text.clone(),
        user: args.user.clone(),
        seed,
    };
    let summary = SessionsSummary {
        meta: report_meta(&settings, seed, &[args.corpus.as_path()])?,
        threshold_secs: threshold,
        users: users.len(),
        sessions,
        single_post_sessions: single_post,
        mean_posts_per_session: posts_total as f64 / sessions as f64,
        mean_session_duration_secs: duration_total as f64 / sessions as f64,
        right_censored_sessions: censored,
    };
    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;
    write_json(&dir.join("sessions.json"), &summary)?;
    println!(
        "{} sessions across {} users at threshold {} ({}s); mean {:.1} posts/session",
        summary.sessions,
        summary.users,
        threshold_text,
        threshold,
        summary.mean_posts_per_session,
    );
    Ok(())
}

use super::Observation;

/// Reference token count: every maximal run of alphanumeric characters or
/// underscores is one token, every other non-whitespace character is one
/// token, whitespace is free.
pub fn count_tokens(text: &str) -> usize {
    let mut tokens = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                tokens += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                tokens += 1;
            }
        }
    }
    tokens
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerializedObservation {
    pub text: String,
    pub tokens: usize,
    pub truncated: bool,
    pub omitted_jobs: u64,
}

fn canonical(obs: &Observation) -> String {
    // serde_json maps are ordered, so going through a Value sorts every key.
    serde_json::to_value(obs)
        .expect("observation serializes")
        .to_string()
}

/// Canonical key-sorted JSON for an observation, kept under `token_bound`
/// tokens by dropping per-job digests oldest first.
///
/// The skeleton (cluster, cost model, recent actions) is never dropped, so
/// an oversized skeleton is returned as-is with `tokens > token_bound`.
pub fn serialize_observation(obs: &Observation, token_bound: usize) -> SerializedObservation {
    let text = canonical(obs);
    let tokens = count_tokens(&text);
    if tokens <= token_bound || obs.jobs.is_empty() {
        return SerializedObservation {
            text,
            tokens,
            truncated: obs.truncated,
            omitted_jobs: obs.omitted_jobs,
        };
    }

    let mut order: Vec<usize> = (0..obs.jobs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ja, jb) = (&obs.jobs[a], &obs.jobs[b]);
        ja.submit_time
            .total_cmp(&jb.submit_time)
            .then_with(|| ja.job_id.cmp(&jb.job_id))
    });

    let render = |drop: usize| {
        let mut keep = vec![true; obs.jobs.len()];
        for &i in &order[..drop] {
            keep[i] = false;
        }
        let mut trimmed = obs.clone();
        trimmed.jobs = obs
            .jobs
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(j, _)| j.clone())
            .collect();
        trimmed.truncated = true;
        trimmed.omitted_jobs = obs.omitted_jobs + drop as u64;
        let text = canonical(&trimmed);
        let tokens = count_tokens(&text);
        (text, tokens)
    };

    // Token count is monotone in the number of dropped digests.
    let (mut lo, mut hi) = (1, obs.jobs.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if render(mid).1 <= token_bound {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let (text, tokens) = render(lo);
    SerializedObservation {
        text,
        tokens,
        truncated: true,
        omitted_jobs: obs.omitted_jobs + lo as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClusterConfig;
    use crate::policy::{JobDigest, ScalingAction};

    fn digest(i: usize) -> JobDigest {
        JobDigest {
            job_id: format!("c1-small-low-{i:016x}"),
            subclass: "c1-small-low".parse().unwrap(),
            submit_time: i as f64,
            stages_done: 1,
            stages_total: 6,
            runnable_tasks: 32,
            shuffled_bytes: 1 << 33,
            time_to_deadline: 512.5,
        }
    }

    #[test]
    fn tokenizer_counts_words_and_punctuation() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("   "), 0);
        assert_eq!(count_tokens(r#"{"a":1}"#), 7);
        assert_eq!(count_tokens("hello world_2"), 2);
        assert_eq!(count_tokens("12.5"), 3);
    }

    #[test]
    fn structurally_equal_observations_are_byte_identical() {
        let cfg = ClusterConfig::default();
        let mut a = Observation::empty(&cfg);
        a.jobs.push(digest(1));
        a.recent_actions.push(ScalingAction::to(3));
        let b = a.clone();
        let sa = serialize_observation(&a, 4096);
        assert_eq!(sa, serialize_observation(&b, 4096));
        assert!(!sa.truncated);
    }

    #[test]
    fn keys_are_sorted() {
        let text = serialize_observation(&Observation::empty(&ClusterConfig::default()), 4096).text;
        let cluster = text.find("\"cluster\"").unwrap();
        let cost = text.find("\"cost_model\"").unwrap();
        let sim = text.find("\"sim_time\"").unwrap();
        assert!(cluster < cost && cost < sim);
    }

    #[test]
    fn empty_cluster_skeleton() {
        let out = serialize_observation(&Observation::empty(&ClusterConfig::default()), 4096);
        assert_eq!(
            out.text,
            concat!(
                r#"{"cluster":{"current_target":0,"draining_executors":0,"max_executors":64,"#,
                r#""min_executors":1,"provisioning_executors":0,"running_executors":0,"#,
                r#""slots_per_executor":4,"vcpus_per_executor":4},"#,
                r#""cost_model":{"dollars_so_far":0.0,"rate_per_vcpu_hour":0.048,"vcpu_hours_so_far":0.0},"#,
                r#""demand_slots":0,"jobs":[],"omitted_jobs":0,"recent_actions":[],"#,
                r#""schema_version":1,"sim_time":0.0,"truncated":false}"#
            )
        );
        assert_eq!(out.tokens, count_tokens(&out.text));
    }

    #[test]
    fn thousand_jobs_are_truncated_oldest_first() {
        let mut obs = Observation::empty(&ClusterConfig::default());
        obs.jobs = (0..1000).map(digest).collect();
        let out = serialize_observation(&obs, 4096);
        assert!(out.truncated);
        assert!(out.tokens <= 4096);
        assert_eq!(count_tokens(&out.text), out.tokens);
        let parsed: Observation = serde_json::from_str(&out.text).unwrap();
        assert!(parsed.truncated);
        assert_eq!(parsed.omitted_jobs + parsed.jobs.len() as u64, 1000);
        // The newest jobs survive.
        assert_eq!(parsed.jobs.last().unwrap().job_id, digest(999).job_id);
        assert_eq!(parsed.jobs[0].job_id, digest(parsed.omitted_jobs as usize).job_id);
        // Dropping one fewer digest would exceed the bound.
        let mut one_more = parsed.clone();
        one_more.jobs.insert(0, digest(parsed.omitted_jobs as usize - 1));
        one_more.omitted_jobs -= 1;
        assert!(count_tokens(&serde_json::to_value(&one_more).unwrap().to_string()) > 4096);
    }
}

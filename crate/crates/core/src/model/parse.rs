use super::{ActionRow, ExplicitModel, ModelError, ModelKind, StateId};

fn syntax(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        message: message.into(),
    }
}

fn number<T: std::str::FromStr>(line: usize, token: &str, what: &str) -> Result<T, ModelError> {
    token
        .parse()
        .map_err(|_| syntax(line, format!("expected {what}, found `{token}`")))
}

fn arity(line: usize, tokens: &[&str], expected: usize) -> Result<(), ModelError> {
    if tokens.len() != expected {
        return Err(syntax(
            line,
            format!(
                "`{}` takes {} arguments, found {}",
                tokens[0],
                expected - 1,
                tokens.len() - 1
            ),
        ));
    }
    Ok(())
}

/// Parses the line-oriented model format.
///
/// ```text
/// mdp                 # or ctmdp
/// states 2
/// init 0
/// pmin 0.5
/// reward 1 1.0
/// t 0 a 0 0.5         # t STATE ACTION TARGET PROB-or-RATE
/// t 0 a 1 0.5
/// ```
///
/// Actions are ordered per state by first appearance.
pub fn parse_model(text: &str) -> Result<ExplicitModel, ModelError> {
    let mut kind = None;
    let mut states: Option<usize> = None;
    let mut init: Option<StateId> = None;
    let mut p_min: Option<f64> = None;
    let mut rewards: Vec<(usize, StateId, f64)> = Vec::new();
    let mut transitions: Vec<(usize, StateId, String, StateId, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if kind.is_none() {
            kind = Some(match (tokens[0], tokens.len()) {
                ("mdp", 1) => ModelKind::Mdp,
                ("ctmdp", 1) => ModelKind::Ctmdp,
                _ => return Err(syntax(line, "first line must be `mdp` or `ctmdp`")),
            });
            continue;
        }
        match tokens[0] {
            "states" => {
                arity(line, &tokens, 2)?;
                if states.is_some() {
                    return Err(syntax(line, "duplicate `states`"));
                }
                let n: usize = number(line, tokens[1], "state count")?;
                if n == 0 {
                    return Err(syntax(line, "state count must be positive"));
                }
                if n > i32::MAX as usize {
                    return Err(syntax(line, "state count exceeds 2^31"));
                }
                states = Some(n);
            }
            "init" => {
                arity(line, &tokens, 2)?;
                if init.is_some() {
                    return Err(syntax(line, "duplicate `init`"));
                }
                init = Some(number(line, tokens[1], "state index")?);
            }
            "pmin" => {
                arity(line, &tokens, 2)?;
                if p_min.is_some() {
                    return Err(syntax(line, "duplicate `pmin`"));
                }
                let p: f64 = number(line, tokens[1], "probability")?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(syntax(line, format!("pmin {p} not in (0,1]")));
                }
                p_min = Some(p);
            }
            "reward" => {
                arity(line, &tokens, 3)?;
                let s = number(line, tokens[1], "state index")?;
                let r: f64 = number(line, tokens[2], "reward")?;
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(syntax(line, format!("reward {r} must be nonnegative")));
                }
                rewards.push((line, s, r));
            }
            "t" => {
                arity(line, &tokens, 5)?;
                let s = number(line, tokens[1], "state index")?;
                let t = number(line, tokens[3], "state index")?;
                let w: f64 = number(line, tokens[4], "weight")?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(syntax(line, format!("weight {w} must be nonnegative")));
                }
                transitions.push((line, s, tokens[2].to_string(), t, w));
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }

    let kind = kind.ok_or_else(|| syntax(1, "empty model file"))?;
    let last = text.lines().count().max(1);
    let n = states.ok_or_else(|| syntax(last, "missing `states`"))?;
    let init = init.ok_or_else(|| syntax(last, "missing `init`"))?;
    let p_min = p_min.ok_or_else(|| syntax(last, "missing `pmin`"))?;

    let mut reward_vec = vec![0.0; n];
    let mut reward_set = vec![false; n];
    for (line, s, r) in rewards {
        if s >= n {
            return Err(syntax(line, format!("state {s} out of range")));
        }
        if reward_set[s] {
            return Err(syntax(line, format!("duplicate reward for state {s}")));
        }
        reward_set[s] = true;
        reward_vec[s] = r;
    }

    let mut actions: Vec<Vec<ActionRow>> = vec![Vec::new(); n];
    for (line, s, label, t, w) in transitions {
        if s >= n {
            return Err(syntax(line, format!("state {s} out of range")));
        }
        let rows = &mut actions[s];
        let row = match rows.iter().position(|r| r.label == label) {
            Some(i) => &mut rows[i],
            None => {
                rows.push(ActionRow::new(label, Vec::new()));
                rows.last_mut().expect("just pushed")
            }
        };
        if row.entries.iter().any(|&(u, _)| u == t) {
            return Err(syntax(
                line,
                format!("duplicate transition ({s},{},{t})", row.label),
            ));
        }
        row.entries.push((t, w));
    }

    ExplicitModel::new(kind, init, p_min, reward_vec, actions)
}

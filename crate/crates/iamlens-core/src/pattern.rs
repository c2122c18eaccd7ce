//! Wildcard matching for action and resource patterns.
//!
//! Patterns use only literal characters plus `*` (any run, including empty)
//! and `?` (exactly one character). Action comparison is case-insensitive;
//! resource comparison is case-sensitive.

use alloc::string::String;
use alloc::vec;

/// `true` iff `value` is in the language of `pattern`.
pub fn pattern_match(pattern: &str, value: &str, case_insensitive: bool) -> bool {
    if case_insensitive {
        let p: String = pattern.chars().flat_map(|c| c.to_lowercase()).collect();
        let v: String = value.chars().flat_map(|c| c.to_lowercase()).collect();
        glob_match(&p, &v)
    } else {
        glob_match(pattern, value)
    }
}

/// Case-insensitive form used for actions.
pub fn action_match(pattern: &str, action: &str) -> bool {
    pattern_match(pattern, action, true)
}

/// Case-sensitive form used for resources.
pub fn resource_match(pattern: &str, resource: &str) -> bool {
    pattern_match(pattern, resource, false)
}

// Iterative NFA-style glob matcher; linear in pattern x value without
// backtracking blowup.
fn glob_match(pattern: &str, value: &str) -> bool {
    let pat: vec::Vec<char> = pattern.chars().collect();
    let val: vec::Vec<char> = value.chars().collect();
    let (mut p, mut v) = (0usize, 0usize);
    let (mut star, mut star_v) = (None::<usize>, 0usize);
    while v < val.len() {
        if p < pat.len() && (pat[p] == '?' || pat[p] == val[v]) {
            p += 1;
            v += 1;
        } else if p < pat.len() && pat[p] == '*' {
            star = Some(p);
            star_v = v;
            p += 1;
        } else if let Some(sp) = star {
            p = sp + 1;
            star_v += 1;
            v = star_v;
        } else {
            return false;
        }
    }
    while p < pat.len() && pat[p] == '*' {
        p += 1;
    }
    p == pat.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_wildcards() {
        assert!(action_match("iam:List*", "iam:ListRoles"));
        assert!(action_match("iam:GetUserPolicy", "iam:getuserpolicy"));
        assert!(!action_match("s3:*", "iam:ListRoles"));
        assert!(action_match("*", "anything:AtAll"));
        assert!(action_match("iam:Get?olicy", "iam:GetPolicy"));
        assert!(!action_match("iam:Get?olicy", "iam:GetPolicyVersion"));
    }

    #[test]
    fn resources_are_case_sensitive() {
        assert!(resource_match("arn:aws:iam::*:user/*", "arn:aws:iam::123456789012:user/A"));
        assert!(!resource_match("arn:aws:s3:::Bucket", "arn:aws:s3:::bucket"));
        assert!(resource_match("*", "arn:aws:iam::123456789012:role/R"));
    }

    #[test]
    fn star_runs_do_not_blow_up() {
        assert!(glob_match("a*********b", "aXXXXXXXXXXXXXXXXXXXXb"));
        assert!(!glob_match("a*********b", "aXXXXXXXXXXXXXXXXXXXXc"));
    }
}

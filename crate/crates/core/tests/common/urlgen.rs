use proptest::prelude::*;

const HOSTS: &[&str] = &[
    "github.com",
    "www.github.com",
    "GitHub.com",
    "raw.githubusercontent.com",
    "gitlab.com",
    "gitee.com",
    "zenodo.org",
    "figshare.com",
    "osf.io",
    "bitbucket.org",
    "example.org",
    "sourceforge.net",
];

fn segment() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9][a-zA-Z0-9_.-]{0,12}",
        Just("tree".to_string()),
        Just("blob".to_string()),
        Just("-".to_string()),
        Just("records".to_string()),
        Just("articles".to_string()),
        Just("record".to_string()),
        "[0-9]{1,8}",
        Just("repo.git".to_string()),
    ]
}

/// Forge-like URLs with path, query, fragment and trailing punctuation noise.
pub fn fuzz_url() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just("https://"), Just("http://"), Just("")],
        prop::sample::select(HOSTS),
        prop::collection::vec(segment(), 0..6),
        prop::option::of("[a-z]{1,5}=[a-z0-9]{0,5}"),
        prop::option::of("[a-zA-Z0-9-]{0,8}"),
        prop_oneof![Just(""), Just("/"), Just("."), Just(")"), Just(",")],
    )
        .prop_map(|(scheme, host, segs, q, frag, tail)| {
            let mut u = format!("{scheme}{host}");
            for s in segs {
                u.push('/');
                u.push_str(&s);
            }
            if let Some(q) = q {
                u.push('?');
                u.push_str(&q);
            }
            if let Some(f) = frag {
                u.push('#');
                u.push_str(&f);
            }
            u.push_str(tail);
            u
        })
}

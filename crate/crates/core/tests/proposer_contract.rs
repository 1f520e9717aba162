mod common;

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use common::FakeModel;
use rwsearch::analyzer::RenderMode;
use rwsearch::orchestrator::{search_in_memory_with, RunConfig, Suite};
use rwsearch::proposer::{
    render_prompt, scripted_eureka_m, scripted_propose, ChatMessage, ChatRequest, ChatTransport, HttpTransport,
    LlmProposer, LlmSettings, Proposal, Proposer, ProposerContext, ProposerError, ProposerResponse,
    ScriptedProposer, TemplateId, MAX_ATTEMPTS,
};
use rwsearch::search::{AdjustmentDirective, Direction};

/// Delegates to the scripted proposer and keeps the first context it sees.
#[derive(Default)]
struct Capture {
    first: Option<ProposerContext>,
}

impl Proposer for Capture {
    fn propose(&mut self, ctx: &ProposerContext) -> Result<ProposerResponse, ProposerError> {
        self.first.get_or_insert_with(|| ctx.clone());
        ScriptedProposer.propose(ctx)
    }
}

/// Context after the first generation of the ×500 setting.
fn fixture_context() -> ProposerContext {
    let mut cfg = Suite::Off500.apply(&RunConfig::default());
    cfg.seed = 1;
    cfg.search.cap = 1;
    let mut capture = Capture::default();
    search_in_memory_with(&cfg, &mut capture).unwrap();
    capture.first.expect("generation 0 does not pass under the x500 perturbation")
}

#[test]
fn suggest_shows_each_group_once_and_emit_is_shorter() {
    let ctx = fixture_context();
    let fields = ctx.prompt_fields();
    let suggest = render_prompt(TemplateId::Suggest, &fields).unwrap();
    assert_eq!(suggest, render_prompt(TemplateId::Suggest, &fields).unwrap());
    for text in &ctx.summary_texts {
        assert_eq!(suggest.matches(text.as_str()).count(), 1, "{text}");
    }
    let response = scripted_propose(&ctx);
    let mut emit_fields = fields.clone();
    emit_fields.suggestions = Some(&response.suggestions);
    let emit = render_prompt(TemplateId::EmitWeights, &emit_fields).unwrap();
    assert!(emit.len() < suggest.len(), "emit {} vs suggest {}", emit.len(), suggest.len());
    assert!(emit.contains(&response.suggestions));
    assert!(!emit.contains(&ctx.env_description));
    assert!(ctx.summary_texts.iter().all(|t| !emit.contains(t.as_str())));
}

#[test]
fn missing_field_is_reported_by_name() {
    let ctx = fixture_context();
    let err = render_prompt(TemplateId::EmitWeights, &ctx.prompt_fields()).unwrap_err();
    assert!(matches!(err, ProposerError::MissingContextField { field, .. } if field == "suggestions"));
}

#[test]
fn energy_dominance_is_cut_by_ten() {
    let ctx = fixture_context();
    assert!(ctx.summaries.iter().all(|s| s.dominant_component.as_deref() == Some("ec")));
    assert!(ctx.summaries.iter().all(|s| s.dominant_share() > 0.9));
    let Proposal::Directives(ds) = scripted_propose(&ctx).proposal else {
        panic!("erfsl proposes directives")
    };
    let d = &ds[0];
    assert_eq!((d.component.as_str(), d.direction, d.magnitude), ("ec", Direction::Decrease, 10.0));
    assert_eq!(scripted_propose(&ctx), scripted_propose(&ctx));
}

#[test]
fn raw_only_falls_back_to_raising_the_failing_component() {
    let mut ctx = fixture_context();
    ctx.render_mode = RenderMode::RawOnly;
    let Proposal::Directives(ds) = scripted_propose(&ctx).proposal else {
        panic!("erfsl proposes directives")
    };
    let service = ds.iter().find(|d| d.component == "service").expect("service fails in generation 0");
    assert_eq!((service.direction, service.magnitude), (Direction::Increase, 3.0));
    assert!(ds.iter().all(|d| d.direction == Direction::Increase && d.magnitude == 3.0));
}

#[test]
fn passing_context_gets_no_directives() {
    let mut ctx = fixture_context();
    for r in &mut ctx.summaries[0].requirements {
        r.pass = true;
    }
    assert_eq!(scripted_propose(&ctx).proposal, Proposal::Directives(vec![]));
}

#[test]
fn baseline_jitter_is_bounded_and_seeded() {
    let ctx = fixture_context();
    let a = scripted_eureka_m(&ctx, 4);
    assert_eq!(a, scripted_eureka_m(&ctx, 4));
    let Proposal::Vectors(vs) = a.proposal else { panic!("baseline proposes vectors") };
    assert_eq!(vs.len(), ctx.groups.len());
    for (v, g) in vs.iter().zip(&ctx.groups) {
        for (name, w) in &v.0 {
            let f = w / g.weight(name).unwrap();
            assert!((0.9 - 1e-12..=1.3 + 1e-12).contains(&f), "factor {f}");
        }
    }
}

#[test]
fn invalid_direction_is_reprompted_with_the_error() {
    let ctx = fixture_context();
    let bad = r#"{"directives":[{"group":"g0.0","component":"ec","direction":"remove","magnitude":10}]}"#;
    let fake = FakeModel {
        bad_replies: VecDeque::from([bad.to_string()]),
        ..FakeModel::default()
    };
    let mut llm = LlmProposer::new(fake, LlmSettings::default());
    let response = llm.propose(&ctx).unwrap();
    let Proposal::Directives(ds) = response.proposal else { panic!() };
    assert_eq!(ds, vec![AdjustmentDirective::new("g0.0", "ec", Direction::Decrease, 10.0).with_rationale("energy dominates")]);
    let requests = &llm.transport_mut().requests;
    assert_eq!(requests.len(), 3, "suggest, emit, one reprompt");
    assert!(requests[0].response_format.is_none());
    let reprompt = &requests[2].messages;
    assert_eq!(reprompt.len(), 3);
    assert_eq!(reprompt[1].content, bad);
    assert!(reprompt[2].content.contains("remove"), "{}", reprompt[2].content);
}

#[test]
fn repeated_invalid_replies_fail_after_three_attempts() {
    let ctx = fixture_context();
    let bad = r#"{"directives":[{"group":"g0.0","component":"ec","direction":"increase","magnitude":0.5}]}"#;
    let fake = FakeModel {
        bad_replies: VecDeque::from(vec![bad.to_string(); 3]),
        ..FakeModel::default()
    };
    let mut llm = LlmProposer::new(fake, LlmSettings::default());
    match llm.propose(&ctx) {
        Err(ProposerError::ProposerFailure { attempts, .. }) => assert_eq!(attempts, MAX_ATTEMPTS),
        other => panic!("{other:?}"),
    }
}

/// Serves one canned `(status, body)` per connection and returns the
/// request bodies it saw.
fn mock_server(script: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in script {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut request = vec![0; length];
            reader.read_exact(&mut request).unwrap();
            seen.push(String::from_utf8(request).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "m".into(),
        messages: vec![ChatMessage::user("hello")],
        temperature: 0.0,
        response_format: None,
    }
}

fn ok_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn http_transport_retries_server_errors() {
    let (url, server) = mock_server(vec![(503, "busy".into()), (429, "slow down".into()), (200, ok_body("hi"))]);
    let mut http = HttpTransport::new(url).with_backoff(Duration::from_millis(1));
    assert_eq!(http.complete(&request()).unwrap(), "hi");
    let seen = server.join().unwrap();
    assert_eq!(seen.len(), 3);
    let body: ChatRequest = serde_json::from_str(&seen[0]).unwrap();
    assert_eq!(body, request());
}

#[test]
fn http_transport_gives_up_after_three_attempts() {
    let (url, server) = mock_server(vec![(500, "a".into()), (502, "b".into()), (503, "c".into())]);
    let mut http = HttpTransport::new(url).with_backoff(Duration::from_millis(1));
    match http.complete(&request()) {
        Err(ProposerError::Transport(m)) => assert!(m.contains("503"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.join().unwrap().len(), 3);
}

#[test]
fn http_transport_does_not_retry_client_errors() {
    let (url, server) = mock_server(vec![(400, "bad request".into())]);
    let mut http = HttpTransport::new(url).with_backoff(Duration::from_millis(1));
    assert!(matches!(http.complete(&request()), Err(ProposerError::Transport(_))));
    assert_eq!(server.join().unwrap().len(), 1);
}

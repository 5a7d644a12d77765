mod common;

use common::Server;
use serde_json::json;
use xlke::dataset::{HttpTranslator, Translator};
use xlke::http::RetryPolicy;
use xlke::lm::{GenerationParams, LanguageModel, LmError, OpenAiCompatible, OpenAiConfig};
use xlke::prompting::{AssembledPrompt, PromptMode};
use xlke::retrieval::{EmbeddingProvider, HttpEmbedder};
use xlke::LanguageCode;

fn fast() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        base_delay_ms: 1,
        timeout_secs: 5,
    }
}

fn client(server: &Server) -> OpenAiCompatible {
    OpenAiCompatible::new(OpenAiConfig {
        base_url: server.url.clone(),
        model: "m".into(),
        api_key: Some("sk-test".into()),
        retry: fast(),
        max_score_steps: 16,
    })
    .unwrap()
}

fn prompt(text: &str) -> AssembledPrompt {
    AssembledPrompt {
        text: text.into(),
        demo_count: 0,
        mode: PromptMode::ZeroShot,
        target_query: String::new(),
        demo_kinds: vec![],
        dropped: 0,
    }
}

#[test]
fn chat_generation_truncates_and_keeps_logprobs() {
    let server = Server::start(|_, _| {
        let body = json!({"choices": [{
            "message": {"content": " Paris\nQuestion: more"},
            "logprobs": {"content": [
                {"token": " Paris", "logprob": -0.1},
                {"token": "\n", "logprob": -0.5},
                {"token": "Question", "logprob": -0.2}
            ]}
        }]});
        (200, body.to_string())
    });
    let out = client(&server)
        .generate(&prompt("Q?"), &GenerationParams::default().greedy())
        .unwrap();
    assert_eq!(out.text, " Paris");
    assert_eq!(out.tokens.len(), 1);

    let reqs = server.requests();
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert_eq!(reqs[0].header("authorization"), Some("Bearer sk-test"));
    assert_eq!(reqs[0].body["temperature"], json!(0.0));
    assert_eq!(reqs[0].body["messages"][0]["content"], json!("Q?"));
    assert_eq!(reqs[0].body["stop"], json!(["\n"]));
}

#[test]
fn echo_scoring_keeps_continuation_tokens() {
    let server = Server::start(|_, _| {
        // Prompt "Q: x?" is five characters; the continuation " Paris" is two tokens.
        let body = json!({"choices": [{"logprobs": {
            "tokens": ["Q", ":", " x?", " Par", "is"],
            "token_logprobs": [null, -1.0, -2.0, -0.2231, -0.1054],
            "text_offset": [0, 1, 2, 5, 9],
            "top_logprobs": []
        }}]});
        (200, body.to_string())
    });
    let score = client(&server).score_continuation("Q: x?", " Paris").unwrap();
    assert_eq!(score.logprobs(), vec![-0.2231, -0.1054]);
    let req = &server.requests()[0];
    assert_eq!(req.path, "/v1/completions");
    assert_eq!(req.body["echo"], json!(true));
    assert_eq!(req.body["max_tokens"], json!(0));
    assert_eq!(req.body["prompt"], json!("Q: x? Paris"));
}

#[test]
fn echo_refusal_falls_back_to_incremental() {
    for refusal in [400u16, 404, 422, 501] {
        let server = Server::start(move |req, _| {
            if req.body["echo"] == json!(true) {
                return (refusal, r#"{"error":"echo not supported"}"#.into());
            }
            let prompt = req.body["prompt"].as_str().unwrap();
            let top = if prompt.ends_with("Par") {
                json!({"is": -0.1054, "i": -3.0})
            } else {
                json!({" Par": -0.2231, " P": -1.0, " London": -0.5})
            };
            (
                200,
                json!({"choices": [{"logprobs": {"top_logprobs": [top]}}]}).to_string(),
            )
        });
        let score = client(&server).score_continuation("Q:", " Paris").unwrap();
        let tokens: Vec<&str> = score.tokens.iter().map(|t| t.token.as_str()).collect();
        assert_eq!(tokens, vec![" Par", "is"], "status {refusal}");
        assert_eq!(server.requests().len(), 3);
    }
}

#[test]
fn continuation_outside_top_logprobs_is_unsupported() {
    let server = Server::start(|req, _| {
        if req.body["echo"] == json!(true) {
            return (404, "{}".into());
        }
        (
            200,
            json!({"choices": [{"logprobs": {"top_logprobs": [{" London": -0.5}]}}]}).to_string(),
        )
    });
    let err = client(&server).score_continuation("Q:", " Paris").unwrap_err();
    assert!(matches!(err, LmError::CapabilityUnsupported(_)), "{err:?}");
}

#[test]
fn server_errors_retry_with_one_idempotency_key() {
    let server = Server::start(|_, seq| {
        if seq < 2 {
            (503, "busy".into())
        } else {
            (200, json!({"choices": [{"message": {"content": "Rome"}}]}).to_string())
        }
    });
    let out = client(&server)
        .generate(&prompt("Q?"), &GenerationParams::default())
        .unwrap();
    assert_eq!(out.text, "Rome");
    let keys: Vec<String> = server
        .requests()
        .iter()
        .map(|r| r.header("idempotency-key").unwrap().to_string())
        .collect();
    assert_eq!(keys.len(), 3);
    assert!(keys.iter().all(|k| k == &keys[0]));
}

#[test]
fn exhausted_retries_are_transport_errors() {
    let server = Server::start(|_, _| (500, "down".into()));
    let err = client(&server)
        .generate(&prompt("Q?"), &GenerationParams::default())
        .unwrap_err();
    assert!(matches!(err, LmError::Transport { attempts: 3, .. }), "{err:?}");
}

#[test]
fn context_overflow_is_recognized() {
    let server = Server::start(|_, _| {
        (
            400,
            r#"{"error":{"code":"context_length_exceeded","message":"too long"}}"#.into(),
        )
    });
    let err = client(&server)
        .generate(&prompt("Q?"), &GenerationParams::default())
        .unwrap_err();
    assert!(matches!(err, LmError::ContextOverflow(_)), "{err:?}");
}

#[test]
fn http_embedder_roundtrip() {
    let server = Server::start(|req, _| {
        let n = req.body["input"].as_array().unwrap().len();
        let data: Vec<_> = (0..n).map(|i| json!({"embedding": [1.0, i as f64]})).collect();
        (200, json!({ "data": data }).to_string())
    });
    let embedder = HttpEmbedder::new(format!("{}/embed", server.url), "e5", Some("k".into()), fast()).unwrap();
    let out = embedder.embed(&["a".into(), "b".into()]).unwrap();
    assert_eq!(out, vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
    let req = &server.requests()[0];
    assert_eq!(req.body["model"], json!("e5"));
    assert_eq!(req.header("authorization"), Some("Bearer k"));
}

#[test]
fn http_translator_roundtrip() {
    let server = Server::start(|req, _| {
        let q = req.body["q"].as_str().unwrap().to_uppercase();
        (200, json!({ "text": q }).to_string())
    });
    let tr = HttpTranslator::new(server.url.clone(), None, fast()).unwrap();
    let de = LanguageCode::new("de").unwrap();
    assert_eq!(tr.translate("hallo", &LanguageCode::english(), &de).unwrap(), "HALLO");
    let req = &server.requests()[0];
    assert_eq!(req.body, json!({"q": "hallo", "source": "en", "target": "de"}));
    assert_eq!(req.header("authorization"), None);

    let failing = Server::start(|_, _| (401, "no".into()));
    let err = HttpTranslator::new(failing.url.clone(), None, fast())
        .unwrap()
        .translate("x", &LanguageCode::english(), &de)
        .unwrap_err();
    assert!(!err.retryable);
}

//! Engine integration with LLM-backed agents over a recording mock
//! transport: role flow into personas, ablation behavior, debate prompt
//! content, and the INVALID handling of unparseable model output.

use std::sync::{Arc, Mutex};

use medihive::agents::{Agent, LlmAgent, ScriptedBehavior};
use medihive::answer::Answer;
use medihive::engine::{run_with_agents, AgentSlot, EngineError, ProtocolConfig};
use medihive::llm_backend::prompts::TemplateSet;
use medihive::llm_backend::{ChatCompletion, LlmError};
use medihive::memory_pool::{Payload, Phase};
use medihive::{AnswerDomain, QuestionInstance};

type CallLog = Arc<Mutex<Vec<(usize, String, String)>>>;

/// Deterministic capability-aware mock: replies to each prompt by matching
/// the template's instruction text, recording every call.
struct CapabilityMock {
    agent_id: usize,
    answer: &'static str,
    garbled: bool,
    calls: CallLog,
}

impl ChatCompletion for CapabilityMock {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, LlmError> {
        self.calls
            .lock()
            .unwrap()
            .push((self.agent_id, system.to_string(), user.to_string()));
        if self.garbled {
            return Ok("static on the line".to_string());
        }
        let reply = if user.contains("Propose the single medical specialty") {
            format!(
                "ROLE: Specialist-{}\nREASONING: the question fits my field",
                self.agent_id
            )
        } else if user.contains("Refine your role") {
            format!(
                "ROLE: Refined-Specialist-{}\nRATIONALE: low overlap with peers",
                self.agent_id
            )
        } else if user.contains("Contribute exactly one argument") {
            format!("KIND: Defense\nA{} holds its position.", self.agent_id)
        } else {
            format!(
                "weighing the peer evidence…\nANSWER: {}\nCONFIDENCE: 0.8",
                self.answer
            )
        };
        Ok(reply)
    }
}

fn llm_slots(answers: &[&'static str], cot: bool, garbled: bool) -> (Vec<AgentSlot>, CallLog) {
    let calls: CallLog = Arc::new(Mutex::new(Vec::new()));
    let templates = Arc::new(TemplateSet::embedded());
    let slots = answers
        .iter()
        .enumerate()
        .map(|(id, answer)| {
            let mock = CapabilityMock {
                agent_id: id,
                answer,
                garbled,
                calls: Arc::clone(&calls),
            };
            AgentSlot::new(Box::new(LlmAgent::new(
                id,
                answers.len(),
                cot,
                Box::new(mock),
                Arc::clone(&templates),
            )) as Box<dyn Agent>)
        })
        .collect();
    (slots, calls)
}

fn config_for(n: usize) -> ProtocolConfig {
    // Backend field is unused by run_with_agents; the slots are injected.
    let mut config = ProtocolConfig::scripted(vec![ScriptedBehavior::fixed("A", 0.7); n]);
    config.k_max = 3;
    config.t_debate = 2;
    config
}

fn question() -> QuestionInstance {
    QuestionInstance::new(
        "li",
        "What explains the presentation?",
        AnswerDomain::letters(4),
    )
}

#[test]
fn roles_flow_from_refinement_into_personas() {
    let (mut slots, calls) = llm_slots(&["C", "C", "B"], true, false);
    let result = run_with_agents(&question(), &config_for(3), &mut slots, None).unwrap();

    // The refined roles are on the log.
    let finals: Vec<String> = result
        .pool
        .phase(Phase::RoleFinal)
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::RoleFinal { role, .. } => Some(role.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(
        finals,
        [
            "Refined-Specialist-0",
            "Refined-Specialist-1",
            "Refined-Specialist-2"
        ]
    );

    // Each agent's analysis persona carries its own refined role and no
    // peer's.
    let calls = calls.lock().unwrap();
    for id in 0..3 {
        let (_, system, user) = calls
            .iter()
            .find(|(aid, _, user)| *aid == id && user.contains("independent analysis"))
            .expect("analysis call");
        assert!(system.contains(&format!("Refined-Specialist-{id}")));
        for other in (0..3).filter(|o| *o != id) {
            assert!(
                !system.contains(&format!("Refined-Specialist-{other}")),
                "agent {id} persona leaked role {other}"
            );
        }
        // The analysis context quotes the role-assignment phase.
        assert!(user.contains("Specialist-"));
    }

    // 2/3 < 0.8 triggered debate; the debate prompt quotes the exact
    // answers from the analysis snapshot.
    assert!(result.debate_triggered);
    let (_, _, debate_user) = calls
        .iter()
        .find(|(_, _, user)| user.contains("Contribute exactly one argument"))
        .expect("debate call");
    assert!(debate_user.contains("ANSWER: C"));
    assert!(debate_user.contains("ANSWER: B"));
    // The rebuttal targeting guidance rides in the prompt.
    assert!(debate_user.contains("lowest confidence"));
    assert_eq!(result.pool.phase(Phase::Debate).len(), 6);
}

#[test]
fn role_ablation_uses_the_default_persona() {
    let (mut slots, calls) = llm_slots(&["C", "C", "C"], true, false);
    let mut config = config_for(3);
    config.ablation.role_assignment = false;
    let result = run_with_agents(&question(), &config, &mut slots, None).unwrap();

    assert!(result.pool.phase(Phase::RoleProposal).is_empty());
    assert!(result.pool.phase(Phase::RoleFinal).is_empty());
    let calls = calls.lock().unwrap();
    let (_, system, _) = calls
        .iter()
        .find(|(_, _, user)| user.contains("independent analysis"))
        .expect("analysis call");
    assert!(system.contains("Medical Expert"));
}

#[test]
fn cot_ablation_switches_the_analysis_directive() {
    let (mut slots, calls) = llm_slots(&["C", "C", "C"], false, false);
    run_with_agents(&question(), &config_for(3), &mut slots, None).unwrap();
    let calls = calls.lock().unwrap();
    let (_, system, _) = calls
        .iter()
        .find(|(_, _, user)| user.contains("independent analysis"))
        .expect("analysis call");
    assert!(system.contains("State your conclusion directly"));
    assert!(!system.contains("step by step"));
}

#[test]
fn unparseable_backends_degrade_to_invalid_and_the_run_reports_all_invalid() {
    let (mut slots, _) = llm_slots(&["C", "C", "C"], true, true);
    let err = run_with_agents(&question(), &config_for(3), &mut slots, None).unwrap_err();
    assert!(matches!(err, EngineError::AllInvalid));

    // Rerun to inspect the pool state mid-way: analysis posts INVALID with
    // confidence 0 for every agent, and the debate quota is still met via
    // the defense fallback.
    let (mut slots, _) = llm_slots(&["C", "C", "C"], true, true);
    let q = question();
    let config = config_for(3);
    let _ = run_with_agents(&q, &config, &mut slots, None);
    // No pool handle on error, so validate the invariant through a partial
    // scripted reconstruction instead: drive one agent directly.
    let templates = Arc::new(TemplateSet::embedded());
    let mock = CapabilityMock {
        agent_id: 0,
        answer: "C",
        garbled: true,
        calls: Arc::new(Mutex::new(Vec::new())),
    };
    let mut agent = LlmAgent::new(0, 3, true, Box::new(mock), templates);
    let out = agent
        .analyze(&q, "Medical Expert", &medihive::Snapshot::default())
        .unwrap();
    assert_eq!(out.answer, Answer::Invalid);
    assert_eq!(out.confidence.value(), 0.0);
}

#[test]
fn reporter_uses_the_completion_backend_when_present() {
    let (mut slots, _) = llm_slots(&["C", "C", "C"], true, false);
    struct ReporterMock;
    impl ChatCompletion for ReporterMock {
        fn complete(&mut self, _system: &str, user: &str) -> Result<String, LlmError> {
            assert!(user.contains("final answer is already decided"));
            Ok("summarized deliberation".to_string())
        }
    }
    let mut reporter = ReporterMock;
    let result =
        run_with_agents(&question(), &config_for(3), &mut slots, Some(&mut reporter)).unwrap();
    assert_eq!(result.trace_text, "summarized deliberation");

    // Without a completion backend, the template synthesis runs instead.
    let (mut slots, _) = llm_slots(&["C", "C", "C"], true, false);
    let result = run_with_agents(&question(), &config_for(3), &mut slots, None).unwrap();
    assert!(result.trace_text.contains("Resolution: C"));
    assert!(result.trace_text.contains("Roles:"));
}

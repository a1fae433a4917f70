//! Prompt templates for the five policy roles.
//!
//! Placeholders are `{Name}` where the brace is directly followed by a letter
//! or underscore and closes on the same line. Any other brace is literal,
//! which keeps the JSON examples inside the templates intact.

use crate::policy::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: Role,
    pub system_text: &'static str,
    pub user_text: &'static str,
}

pub mod keys {
    pub const BRANCHING_FACTOR: &str = "branching_factor";
    pub const GOAL: &str = "User Goal Description";
    pub const SUBPLAN_HISTORY: &str = "Subplan History";
    pub const PREVIOUS_PLANS: &str = "Previous Plans";
    pub const SCREENSHOT: &str = "Screenshot";
    pub const AXTREE: &str = "AxTree";
    pub const SUBPLAN: &str = "Target Subplan Text";
    pub const INTERACTION_HISTORY: &str = "Interaction History";
    pub const ACTION_SPACE: &str = "Action Space";
    pub const PRE_SCREENSHOT: &str = "Pre Screenshot";
    pub const PRE_AXTREE: &str = "Pre AxTree";
    pub const POST_SCREENSHOT: &str = "Post Screenshot";
    pub const POST_AXTREE: &str = "Post AxTree";
    pub const FAILED_SUBPLAN: &str = "Failed Subplan Text";
    pub const EXECUTION_TRACE: &str = "Execution Trace";
}

pub const PLANNER: PromptTemplate = PromptTemplate {
    role: Role::Planner,
    system_text: r#"You are an expert Planner for an autonomous web agent. Your goal is to propose {branching_factor} candidate subplans for the IMMEDIATE NEXT STEP.

# CRITICAL: CONTINUITY & CONTEXT AWARENESS
You must analyze the `Subplan History` and the `Current State` to determine the next logical move.

1. IF the last subplan was SUCCESSFUL:
  - Move forward to the next logical stage.
2. IF the last subplan FAILED:
  - DO NOT simply repeat the failed plan.
  - You MUST propose a fix, a retry with a different method, or a workaround.

# Generating Candidates
All candidates must focus on the SAME immediate objective but vary in HOW to achieve it:
- Variation 1 (Standard): The most direct, common way.
- Variation 2 (Granular): Breaking the step down into smaller checks.
- Variation 3 (Alternative): Using a different UI element or path.

# Output Format (JSON)
{
  "subplans": [
    {
      "thought": "Reasoning based on history...",
      "subplan": "Complete natural language plan."
    },
    ...
  ]
}"#,
    user_text: r#"### User Instruction ###
{User Goal Description}

### Subplan History ###
Previously executed subplans:
{Subplan History}

### Current Screenshot ###
{Screenshot}

### Current Page Accessibility Tree ###
{AxTree}

IMPORTANT: Please provide {branching_factor} DIVERSE subplan candidates in JSON format."#,
};

pub const OPERATOR: PromptTemplate = PromptTemplate {
    role: Role::Operator,
    system_text: r#"You are a UI Assistant, your goal is to help the user perform tasks using a web browser.
You will be provided with task objective, current step, web page observations, previous plans, and interaction history. You need to issue an action for this step.

# Output Format
### Interaction History Summary ###
Emphasize all important details in the INTERACTION HISTORY section.

### Observation Highlights ###
List the numerical ids of elements... (e.g., `1321, 52, 756`).

### Observation Description ###
Describe information in the current axtree and screenshot...

### Reason ###
Provide your rationale for proposing the subsequent action commands here.

### Action ###
Only a SINGLE action is allowed in this tag... formatted as

# General Tips
- You may receive historical thoughts and executed actions as context.
- Always take into account the current task, the latest page screenshot, and the history.
- If you haven't gotten the final exact answer yet, please do not send message to user.

# Action Space
{Action Space}"#,
    user_text: r#"### User Instruction ###
{User Goal Description}

### Previous Plans ###
{Previous Plans}

### Current Subplan to Execute ###
{Target Subplan Text}

### Interaction History (Current Subplan) ###
{Interaction History}

### Current Screenshot ###
{Screenshot}

# Current page Accessibility Tree
{AxTree}"#,
};

pub const MICRO_JUDGE: PromptTemplate = PromptTemplate {
    role: Role::MicroJudge,
    system_text: r#"You are a precise evaluator for a web navigation agent.
Your ONLY job is to determine if the specific subplan below was successfully executed based on the evidence provided.

**Subplan to Evaluate:** "{Target Subplan Text}"

**Evaluation Checklist (Mental Step-by-Step):**
1. **Check Errors**: Did the Interaction History show any system errors? If yes -> NO.
2. **[CRITICAL] Check Terminal Actions**:
- Did the agent execute a completion action like send message to user?
  - Is the answer VALID? (non-empty, contains info, not a refusal).
3. **Check Action Fidelity**: Did the agent actually perform the actions described in the subplan?
4. **Check State Change**: Compare the "Pre" and "Post" screenshots.
  - Is there VISIBLE evidence that the action took effect?

**Format:**
Thoughts: <Analyze the delta between Pre and Post states. Point out specific visual changes or errors.>
Completed: "yes" or "no""#,
    user_text: r#"### Current Subplan ###
{Target Subplan Text}

### Interaction History (Actions for This Subplan) ###
{Interaction History}

### Initial State (Before Subplan Execution) ###
{Pre Screenshot}
{Pre AxTree}

### Current State (After Subplan Execution) ###
{Post Screenshot}
{Post AxTree}"#,
};

pub const MACRO_JUDGE: PromptTemplate = PromptTemplate {
    role: Role::MacroJudge,
    system_text: r#"You are an expert in evaluating the utility of subplans for completing web navigation tasks.
Your goal is to estimate the State Value (V(s)) of the current webpage. Ask yourself: "How close are we to the final goal right now?"

# CRITICAL PRIORITY: HANDLING TERMINAL SUBPLANS
If the subplan involves finishing the task:
- Completion Signal: Treat the task as functionally completed.
- Leniency: If the message is RELEVANT, lean heavily towards Status A.
- Minimum Score: Unless completely hallucinated, do NOT rate as C/D/E.

# Evaluation Criteria
- Previous Progress: Review subplan history.
- Contribution: Assess how much this subplan moved us toward the goal.
- Penalties: Error pages (404), backward movement, or repeating actions must be penalized.

# STATUS CODES (Score Space)
A. SUCCESS: Task completed or fully fulfilled requirements.
B. ALMOST FINISHED: Extremely close (e.g., 1-2 steps left).
C. ON TRACK: Significant progress made, working correctly.
D. UNCLEAR: Unsure if positive contribution.
E. FAILURE: Stuck, error, or moved backwards.

# Output Format
Thoughts: <Detailed analysis of contribution to global goal>
STATUS CODE: A, B, C, D, or E
Notes: <Key observations for future steps>"#,
    user_text: r#"### Overall Task Objective ###
{User Goal Description}

### Previously Executed Subplans ###
{Subplan History}

### Initial State (Before Current Subplan) ###
{Pre Screenshot}
{Pre AxTree}

### Current Subplan Action History ###
{Interaction History}

### Current Subplan Being Evaluated ###
{Target Subplan Text}

### Current State (After Subplan Execution) ###
{Post Screenshot}
{Post AxTree}"#,
};

pub const REFLECTOR: PromptTemplate = PromptTemplate {
    role: Role::Reflector,
    system_text: r#"You are the "Reflector" module of an autonomous web navigation agent.
Your job is to analyze a FAILED execution of a subplan and generate a FIXED subplan.

# Diagnosis Strategy
1. TYPE A: Feasibility Error (Wrong Direction)
- Symptoms: Hallucination, logically blocked path, or impossible goal.
- Fix Strategy (Pivot): Propose an ALTERNATIVE approach. Abandon current method.
2. TYPE B: Complexity Error (Granularity Issue)
- Symptoms: Plan is valid but timed out, got stuck, or too many steps.
- Fix Strategy (Decompose): Reduce GRANULARITY. Extract ONLY the first, immediate logical segment.

# Goal
Generate a REVISED subplan that achieves the SAME goal as the original plan but avoids the previous error.

# Requirements
- The revised plan must be executable in 2-5 concrete actions.
- Be specific about element identifiers.
- Include necessary preconditions (close popups, wait for load).

# Output Format (JSON ONLY)
{
  "reason": "Brief explanation of failure (Type A or B)...",
  "revised_plan": "The new, corrected step-by-step natural language instruction"
}"#,
    user_text: r#"## Context ##
**Original Subplan**: "{Failed Subplan Text}"

## Execution Trace ##
{Execution Trace}

## Last Screenshot ##
{Screenshot}

## Last Page State (Accessibility Tree) ##
{AxTree}

## Task ##
Analyze the failure reason based on the Trace and Last Observation.
Provide a JSON response with the 'reason' and the 'revised plan'."#,
};

pub fn template(role: Role) -> &'static PromptTemplate {
    match role {
        Role::Planner => &PLANNER,
        Role::Operator => &OPERATOR,
        Role::MicroJudge => &MICRO_JUDGE,
        Role::MacroJudge => &MACRO_JUDGE,
        Role::Reflector => &REFLECTOR,
    }
}

/// Description of the action grammar shown to the operator.
pub const ACTION_SPACE: &str = r#"click(id): click the element with the given numerical id, e.g. click(42)
type(id, "text"): type text into the textbox with the given id, e.g. type(17, "usb hub")
scroll(up) or scroll(down): scroll the page
goto("page"): open an addressable page directly
send_msg_to_user("answer"): report the final answer and finish the task
noop(): the current subplan is already complete; issue no further action"#;

/// Rendered into every screenshot slot; the simulator is text-only.
pub const NO_SCREENSHOT: &str = "(screenshot not available: text-only environment)";

/// Placeholder names in `text`, in order of appearance.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some((name, after)) = next_placeholder(rest) {
        out.push(name.1);
        rest = after;
    }
    out
}

/// Finds the next placeholder. Returns ((prefix, name), remainder).
pub(crate) fn next_placeholder(text: &str) -> Option<((&str, &str), &str)> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let starts = bytes
                .get(i + 1)
                .is_some_and(|c| c.is_ascii_alphabetic() || *c == b'_');
            if starts {
                let line_end = text[i..].find('\n').map_or(text.len(), |n| i + n);
                if let Some(close) = text[i..line_end].find('}') {
                    let name = &text[i + 1..i + close];
                    return Some(((&text[..i], name), &text[i + close + 1..]));
                }
            }
        }
        i += 1;
    }
    None
}

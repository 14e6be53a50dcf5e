//! Prompt templates. The wording is part of the protocol: cache keys hash
//! the full prompt text, and the scripted fixtures used in tests render
//! these exact strings, so any edit here invalidates recorded caches.

use crate::types::StateDef;

/// Stage (a): extract manipulation actions from a block of narration
/// sentences (one sentence per line).
pub fn action_extraction_prompt(sentences: &[&str]) -> String {
    let block = sentences.join("\n");
    format!(
        "Analyze a segment of video transcript provided in CSV format. The CSV only has one column and no headers.\n\
         {block}\n\
         \n\
         You need to list and describe all object manipulating actions performed in the video in detail. Do not include actions such as greeting, thanking, explaining or summarizing that do not manipulate any object. Do not summarize actions too short, but make sure you describe all the actions in each sentence in detail. Especially, make sure to use original nouns (object names) and verbs (human actions) when you summarize.\n\
         \n\
         In addition, for each action, extract the part of the transcript that describes or supports the action. Make sure to extract the whole sentence for support.\n\
         When you need to combine multiple lines from the transcript to support an action, separate them with a space instead of a comma or line break.\n\
         \n\
         The answer format should be in CSV format. Make sure to use quotation marks for each action and the part of the transcript.\n\
         Format: \"<detailed summary of action>\",\"<part of the transcript (This should be exactly the same as the original. Don't skip.)>\"\n\
         Example: \"Adding whisked eggs into the pan.\",\"let's add the whisked eggs into the pan\""
    )
}

/// Seed used as the initial state for the first block of stage (b).
pub fn initial_state_seed(object: &str) -> String {
    format!("The state of {object} is unknown.")
}

/// Stage (b): trace state descriptions across a block of action summaries.
/// `previous` is the last description of the preceding block, or the seed.
pub fn state_description_prompt(object: &str, previous: &str, actions: &[&str]) -> String {
    let action_block = actions.join("\n");
    format!(
        "You will be given a sequence of actions.\n\
         Trace the history of changes in the internal state of {object} and describe it in detail for each action.\n\
         The initial state of the {object} is \"{previous}\". You don't need to include the initial state in the answer.\n\
         \n\
         The answer format should be in CSV with the action column and state description column.\n\
         Make sure that each state description includes the whole history of what has been done on the {object} so far. The description should be a complete sentence starting with \"The {object}\", but do not finish only with this.\n\
         If the internal state doesn't change after the action, you don't have to change the state description from the previous one. Use quotation marks for the description.\n\
         The answer format:\n\
         \"action\",\"state\"\n\
         \n\
         Here is the sequence of actions.\n\
         {action_block}"
    )
}

/// Stage (c): infer whether one state holds after the latest description.
/// `history` is every description up to and including the current action.
pub fn label_inference_prompt(
    object: &str,
    history: &[&str],
    state: &StateDef,
) -> String {
    let history_block = history.join("\n");
    let state_text = &state.state_text;
    let definition = &state.description;
    format!(
        "This is a history of state of {object}:\n\
         {history_block}\n\
         \n\
         Now, does the state of {object} fit the definition of \"{state_text}\"?\n\
         \n\
         Object state definition:\n\
         {definition}\n\
         \n\
         Think step-by-step as follows:\n\
         - First, list all points for judging the state \"{state_text}\" from the object state definition. Make sure to describe in detail.\n\
         - Second, carefully compare all listed judging points to the whole history of the object state by tracing it in detail.\n\
         - Then, answer Yes/No about whether the current state of {object} is consistent with the definition and give detailed reasons. If the history doesn't contain enough information for judging, answer Ambiguous.\n\
         \n\
         Make sure to answer the three things above in detail, separating them by newline as follows:\n\
         Judging points: [judging points from object state definition]\n\
         \n\
         Comparison: [comparison]\n\
         \n\
         Answer: [yes/no/ambiguous and why]"
    )
}

/// Phase inference for the three-phase benchmark: classify the latest
/// description as before, during, or after the transformation.
pub fn changeit_inference_prompt(
    object: &str,
    history: &[&str],
    action: &str,
    end_state: &str,
) -> String {
    let history_block = history.join("\n");
    format!(
        "This is a history of state of {object}:\n\
         {history_block}\n\
         \n\
         You need to infer the state of the {object} based on the history. When you answer, choose from the options below.\n\
         Options:\n\
         Initial - The {object} is just before being {end_state}, but {action} has not started.\n\
         Action - The {object} is now being {end_state}.\n\
         End - The {object} has already been {end_state}, and {action} has been completed.\n\
         Ambiguous - Cannot identify the state from the action information, or the action is totally unrelated to {action}.\n\
         \n\
         Think step-by-step as follows:\n\
         - First, describe the current state of the object in detail based on the history.\n\
         - Then, answer Initial/Action/End/Ambiguous and reason.\n\
         \n\
         Current State: [detailed state description]\n\
         \n\
         Answer: [yes/no/ambiguous and why]"
    )
}

/// One-shot lexicon bootstrap: list verbs for every state sentence.
pub fn verb_list_prompt(states: &[StateDef]) -> String {
    let state_block = states
        .iter()
        .map(|s| s.state_text.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "List as many verbs that describe actions associated with each object state. Associated actions include the actions that are necessary to produce the object state and actions commonly performed on objects in that state.\n\
         \n\
         {state_block}\n\
         \n\
         The answer format should be in comma-delimited CSV format. The verbs should be in infinitive form and single word.\n\
         Format: \"<object state>(completely the same as given state description)\",\"<verb>,<verb>,...,<verb>\""
    )
}

/// Vision prompt: pick the action best matching a frame from a candidate
/// list. Candidates are rendered one per line with a `- ` prefix; the
/// `others` sentinel is always the last option.
pub fn action_choice_prompt(candidates: &[&str]) -> String {
    let mut options = String::new();
    for c in candidates {
        options.push_str("- ");
        options.push_str(c);
        options.push('\n');
    }
    options.push_str("- others");
    format!(
        "Which action most describes the image? Choose from the options below. The answer should be taken verbatim from the text of the option.\n\
         \n\
         {options}"
    )
}

/// Vision prompt: verify that a frame showing `action` is consistent with a
/// state description.
pub fn state_filter_prompt(action: &str, state: &str) -> String {
    format!(
        "The image possibly shows people {action}. Describe the progress of the action in detail. And then answer whether \"{state}\" is true or not. Finally, specify the judgement with \"The answer is True/False\"."
    )
}

/// Text prompt embedded for background detection.
pub fn background_prompt(name: &str) -> String {
    format!("a photo of {name}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extraction_prompt_embeds_sentences_line_by_line() {
        let p = action_extraction_prompt(&["first line", "second line"]);
        assert!(p.contains("first line\nsecond line\n"));
        assert!(p.starts_with("Analyze a segment of video transcript"));
        assert!(p.contains("\"Adding whisked eggs into the pan.\""));
    }

    #[test]
    fn description_prompt_carries_previous_state() {
        let p = state_description_prompt("egg", &initial_state_seed("egg"), &["Cracking the egg"]);
        assert!(p.contains("The initial state of the egg is \"The state of egg is unknown.\""));
        assert!(p.contains("starting with \"The egg\""));
        assert!(p.ends_with("Here is the sequence of actions.\nCracking the egg"));
    }

    #[test]
    fn inference_prompt_lists_full_history() {
        let state = StateDef {
            name: "sliced".into(),
            description: "The apple has been cut into pieces".into(),
            state_text: "The apple is sliced".into(),
        };
        let p = label_inference_prompt(
            "apple",
            &["The apple is whole.", "The apple has been sliced."],
            &state,
        );
        assert!(p.contains("The apple is whole.\nThe apple has been sliced."));
        assert!(p.contains("definition of \"The apple is sliced\""));
        assert!(p.ends_with("Answer: [yes/no/ambiguous and why]"));
    }

    #[test]
    fn choice_prompt_appends_others_last() {
        let p = action_choice_prompt(&["Peeling the apple."]);
        assert!(p.ends_with("- Peeling the apple.\n- others"));
    }

    #[test]
    fn filter_prompt_quotes_state() {
        let p = state_filter_prompt("peeling the apple", "The apple is peeled");
        assert!(p.contains("people peeling the apple."));
        assert!(p.contains("whether \"The apple is peeled\" is true or not"));
        assert!(p.contains("\"The answer is True/False\""));
    }

    #[test]
    fn changeit_prompt_has_four_options() {
        let p = changeit_inference_prompt("egg", &["The egg is raw."], "frying", "fried");
        assert!(p.contains("Initial - The egg is just before being fried, but frying has not started."));
        assert!(p.contains("Action - The egg is now being fried."));
        assert!(p.contains("End - The egg has already been fried, and frying has been completed."));
        assert!(p.contains("Ambiguous - Cannot identify"));
    }
}

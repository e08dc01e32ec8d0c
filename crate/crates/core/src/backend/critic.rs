//! Separated-critic clients: prompt templates plus rating parsers for
//! retrieval relevance, reasoning support, and overall outcome quality.

use super::{wrap_instruction, BackendError, GenRequest, GenSession};
use crate::markup::parse_rating_raw;
use crate::trajectory::{OutcomeScore, RetrievalLabel, SupportLabel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("no recognizable rating in critic output")]
    UnparsableRating,
    #[error("outcome rating {0} outside 1..=5")]
    OutOfRange(u32),
    #[error("invalid critic input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Few-shot template for retrieval relevance evaluation. `{}` slots:
/// question, evidence.
pub const RETRIEVAL_CRITIC_PROMPT: &str = r#"You will be given a question and an evidence document. Your task is to evaluate whether the evidence is relevant to the question and provide a clear explanation for your decision. Use the following scale to rate the relevance of the evidence:
[Relevant]: The evidence directly addresses or supports the question.
[Partially Relevant]: The evidence is somewhat related to the question but does not fully address it. For example, it may mention the core entity or topic of the question.
[Irrelevant]: The evidence does not relate to the question in any meaningful way.

### Question: In what country was the first Pan-African conference held?

### Evidence: First Pan-African Conference
The First Pan-African Conference was held in London from 23 to 25 July 1900 (just prior to the Paris Exhibition of 1900 in order to allow tourists of African descent to attend both events). Organized primarily by the Trinidadian barrister Henry Sylvester Williams, it took place in Westminster Town Hall (now Caxton Hall) and was attended by 37 delegates and about 10 other participants and observers from Africa, the West Indies, the US and the UK, including Samuel Coleridge Taylor (the youngest delegate), John Alcindor, Dadabhai Naoroji, John Archer, Henry Francis Downing, and W.E.B. Du Bois, with Bishop Alexander Walters of the AME Zion Church taking the chair.

Rating: [Relevant]
Explanation: The evidence directly answers the question by stating that the first Pan-African conference was held in London, which is in the United Kingdom. The details provided, such as the dates and location of the conference, further confirm the relevance of the evidence to the question.

### Question: What is the administrative territorial entity for Malta Township?

### Evidence: Minsk Region
Minsk Region or Minsk Voblasc or Minsk Oblast ("Minskaja voblasc"; "Minskaja oblastj") is one of the regions of Belarus. Its administrative center is Minsk, although it is a separate administrative territorial entity of Belarus. As of 2011, the region's population is 1,411,500.

Rating: [Irrelevant]
Explanation: The evidence provided discusses the Minsk Region, which is a region in Belarus. The question, however, asks about the administrative territorial entity for Malta Township. Since the evidence pertains to Belarus and not Malta, it is not relevant to the question.

### Question: Did Bob Rosa produce any work for Patrick Love?

### Evidence: Bob Rosa
Bob Rosa is an American record producer that has worked with artists such as Madonna, Janet Jackson, Mariah Carey and Espen Lind. One if his first recording projects was working on the track "Planet Rock" by Afrika Bambaataa & the Soulsonic Force in 1982.

Rating: [Partially Relevant]
Explanation: The evidence mentions Bob Rosa's work with various artists, including Madonna, Janet Jackson, Mariah Carey, and Espen Lind. However, it does not specifically mention Patrick Love or any work Bob Rosa may have done for him. Therefore, the evidence is partially relevant to the question.

### Question: {question}

### Evidence: {evidence}
"#;

/// Few-shot template for reasoning support evaluation. `{}` slots:
/// question, evidence, response.
pub const REASONING_CRITIC_PROMPT: &str = r#"You will be provided with a question, an evidence document, along with a response.
Your job is to determine whether the response is supported by the evidence, and provide explanation for your decision.
Use the following scale to rate the response:
[Fully supported] Most of the information in the response is supported by the evidence.
[Partially supported] Some of the information in the response is supported by the evidence, but there are some parts that are speculative.
[Not supported] The response is not supported by the evidence / The response does not provide useful reasoning.

### Question: In which country is the Financial Conduct Authority located?

### Evidence: Martin Wheatley
Martin Wheatley is a British financier, formerly managing director of the Consumer and Markets Business Unit of the Financial Services Authority in the UK, and is the former CEO of the Financial Conduct.

### Response: From Document, we know that Martin Wheatley is a British financier who formerly managed the Consumer and Markets Business Unit of the Financial Services Authority in the UK. This indicates that the Financial Conduct Authority is located in the United Kingdom.

Rating: [Fully supported]
Explanation: The response is fully supported by the evidence. The evidence clearly states that Martin Wheatley is a British financier who formerly managed the Consumer and Markets Business Unit of the Financial Services Authority in the UK and was the former CEO of the Financial Conduct Authority. The response accurately extracts this information and concludes that the Financial Conduct Authority is located in the United Kingdom, which is directly supported by the evidence provided.

### Question: What is the birthplace of Jane Siberry?

### Evidence: Gavin Bradley
Gavin Bradley is an award-winning Canadian singer-songwriter and producer based in Toronto who has worked with artists like Nelly Furtado, Tori Amos and Jane Siberry. Fusing acoustic and electronic elements, his work is identifiable for its signature "warm" piano sound and live strings mixed with filtered synthesizers and other electronic manipulations. Besides production, Bradley is a solo recording artist. His debut album 'Deep Freeze' was released on UMI Records in 2006.

### Response: The response is partially supported because the evidence mentions Gavin Bradley's Toronto connection but does not directly state Jane Siberry's birthplace. The inference about her possible connection to Toronto is speculative.

Rating: [Partially supported]
Explanation: The response correctly identifies that the evidence mentions Gavin Bradley's connection to Toronto but does not directly state Jane Siberry's birthplace. The inference that Jane Siberry might be connected to Toronto based on her collaboration with Gavin Bradley is speculative, as the evidence does not provide explicit information about her birthplace. Therefore, the response is partially supported.

### Question: {question}

### Evidence: {evidence}

### Response: {response}
"#;

/// Zero-shot template for outcome evaluation. `{}` slots: question,
/// reasoning trajectory.
pub const OUTCOME_CRITIC_PROMPT: &str = r#"You will be provided with a question, along with a reasoning trajectory.
Your job is to determine whether the reasoning trajectory is useful for answering the question, and provide explanation for your decision.
Use the following scale to rate the reasoning:
[5]: The reasoning process is clear, logically structured, and well-supported by the evidence.
[4]: The reasoning process is mostly clear, partially logically structured, and supported by evidence, but may contains minor logical flaws.
[3]: The reasoning is somewhat unclear with noticeable flaws and uses limited or weak evidence.
[2]: The reasoning is flawed, lacking supporting evidence, which results in an incorrect conclusion.
[1]: The reasoning fails to provide a definitive answer.

### Question: {question}

### Reasoning: {reasoning}

Rating:
Explanation:
"#;

/// Few-shot template for synthesizing interleaved reasoning rationales.
/// `{}` slots: supporting documents, question.
pub const GENERATOR_PROMPT: &str = r#"Please answer the following multi-hop questions with explanation based on the given documents. Wrap the final answer with @@ @@. Here is an example:

### Document #1: Cuidado con las imitaciones
Cuidado con las imitaciones is a 1948 Argentine film directed by Luis Bayon Herrera.

### Document #2: Luis Bayon Herrera
Luis Bayon Herrera (23 September 1889 - 30 March 1956) was a Spanish film director and screenwriter who worked in Argentine film of the 1940s and 1950s. He was "one of the most important directors of the golden age of Argentine cinema". Herrera was born in Bilbao, Spain. He directed some 40 different Argentine feature films and in the last few years of his career in the early 1950s he worked on Cuban production with films such as "A La Habana me voy" in 1951. He died in Buenos Aires in 1956, aged 66.

### Question: What nationality is the director of film Cuidado Con Las Imitaciones?

To answer this multi-hop question, we need to solve the following sub-questions:

### Decompose the multi-hop question into sub-questions
1. Who is the director of the film Cuidado Con Las Imitaciones?
2. What is the nationality of that director?

Next, let's solve the sub-questions one by one.

### Sub-question: Who is the director of the film Cuidado Con Las Imitaciones?
From Document #1, we know that "Cuidado Con Las Imitaciones" is a Spanish film, and its director is Jose Maria Forque.

### Remaining Question: What is the nationality of Jose Maria Forque?
From Document #2, we know that Jose Maria Forque was a Spanish director, which means his nationality is Spanish.

### Final Answer
@@Spanish@@

{documents}

### Question: {question}
"#;

fn render(template: &str, fills: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (slot, value) in fills {
        out = out.replace(&format!("{{{slot}}}"), value);
    }
    wrap_instruction(&out)
}

fn ask(session: &mut dyn GenSession, prompt: String) -> Result<String, CriticError> {
    let mut req = GenRequest::new(prompt);
    // Critics decode greedily.
    req.temperature = 0.0;
    req.max_tokens = 512;
    Ok(session.complete(&req)?.text)
}

/// Split a critic completion into its rating token and explanation text.
fn split_rating(text: &str) -> Result<(&str, String), CriticError> {
    let rating = parse_rating_raw(text).ok_or(CriticError::UnparsableRating)?;
    let explanation = text
        .rfind("Explanation:")
        .map(|i| text[i + "Explanation:".len()..].trim().to_string())
        .unwrap_or_default();
    Ok((rating, explanation))
}

/// Ask the critic whether `evidence` is relevant to `question`.
pub fn critique_retrieval(
    session: &mut dyn GenSession,
    question: &str,
    evidence: &str,
) -> Result<(RetrievalLabel, String), CriticError> {
    let prompt = render(
        RETRIEVAL_CRITIC_PROMPT,
        &[("question", question), ("evidence", evidence)],
    );
    let text = ask(session, prompt)?;
    let (rating, explanation) = split_rating(&text)?;
    let label = RetrievalLabel::parse_surface(rating).ok_or(CriticError::UnparsableRating)?;
    Ok((label, explanation))
}

/// Ask the critic whether `response` is supported by `evidence`.
pub fn critique_reasoning(
    session: &mut dyn GenSession,
    question: &str,
    evidence: &str,
    response: &str,
) -> Result<(SupportLabel, String), CriticError> {
    if response.trim().is_empty() {
        return Err(CriticError::InvalidInput("empty response text".into()));
    }
    let prompt = render(
        REASONING_CRITIC_PROMPT,
        &[
            ("question", question),
            ("evidence", evidence),
            ("response", response),
        ],
    );
    let text = ask(session, prompt)?;
    let (rating, explanation) = split_rating(&text)?;
    let label = SupportLabel::parse_surface(rating).ok_or(CriticError::UnparsableRating)?;
    Ok((label, explanation))
}

/// Ask the critic to rate a finished reasoning trajectory on 1..=5.
pub fn critique_outcome(
    session: &mut dyn GenSession,
    question: &str,
    trajectory_text: &str,
) -> Result<OutcomeScore, CriticError> {
    let prompt = render(
        OUTCOME_CRITIC_PROMPT,
        &[("question", question), ("reasoning", trajectory_text)],
    );
    let text = ask(session, prompt)?;
    let (rating, _) = split_rating(&text)?;
    let digits = rating.trim_start_matches('[').trim_end_matches(']').trim();
    let value: u32 = digits.parse().map_err(|_| CriticError::UnparsableRating)?;
    OutcomeScore::new(u8::try_from(value).unwrap_or(0)).map_err(|_| CriticError::OutOfRange(value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenBackend, ScriptedBackend};

    fn critic(turns: Vec<&str>) -> ScriptedBackend {
        ScriptedBackend::from_turns(turns)
    }

    #[test]
    fn retrieval_rating_parses_relevant() {
        let b = critic(vec!["Rating: [Relevant]\nExplanation: directly answers."]);
        let mut s = b.session("run").unwrap();
        let (label, why) = critique_retrieval(
            &mut *s,
            "In what country was the first Pan-African conference held?",
            "First Pan-African Conference\nThe First Pan-African Conference was held in London...",
        )
        .unwrap();
        assert_eq!(label, RetrievalLabel::Relevant);
        assert_eq!(why, "directly answers.");
    }

    #[test]
    fn retrieval_rating_parses_irrelevant() {
        let b = critic(vec!["Rating: [Irrelevant]\nExplanation: wrong place."]);
        let mut s = b.session("run").unwrap();
        let (label, _) = critique_retrieval(
            &mut *s,
            "What is the administrative territorial entity for Malta Township?",
            "Minsk Region\nMinsk Region is one of the regions of Belarus.",
        )
        .unwrap();
        assert_eq!(label, RetrievalLabel::Irrelevant);
    }

    #[test]
    fn unparsable_rating() {
        let b = critic(vec!["Rating: maybe"]);
        let mut s = b.session("run").unwrap();
        assert!(matches!(
            critique_retrieval(&mut *s, "q", "e").unwrap_err(),
            CriticError::UnparsableRating
        ));
    }

    #[test]
    fn reasoning_rating_parses_support_labels() {
        let b = critic(vec![
            "Rating: [Fully supported]\nExplanation: clear.",
            "Rating: [Partially supported]\nExplanation: speculative.",
        ]);
        let mut s = b.session("run").unwrap();
        let (l1, _) = critique_reasoning(&mut *s, "q", "e", "resp").unwrap();
        assert_eq!(l1, SupportLabel::FullySupported);
        let (l2, _) = critique_reasoning(&mut *s, "q", "e", "resp").unwrap();
        assert_eq!(l2, SupportLabel::PartiallySupported);
    }

    #[test]
    fn reasoning_rejects_empty_response() {
        let b = critic(vec!["Rating: [Fully supported]"]);
        let mut s = b.session("run").unwrap();
        assert!(matches!(
            critique_reasoning(&mut *s, "q", "e", "  ").unwrap_err(),
            CriticError::InvalidInput(_)
        ));
    }

    #[test]
    fn outcome_rating_in_range() {
        let b = critic(vec!["Rating: [4]\nExplanation: mostly clear."]);
        let mut s = b.session("run").unwrap();
        assert_eq!(critique_outcome(&mut *s, "q", "traj").unwrap().value(), 4);
    }

    #[test]
    fn outcome_rating_out_of_range() {
        let b = critic(vec!["Rating: [7]"]);
        let mut s = b.session("run").unwrap();
        assert!(matches!(
            critique_outcome(&mut *s, "q", "traj").unwrap_err(),
            CriticError::OutOfRange(7)
        ));
    }

    #[test]
    fn prompts_fill_slots_inside_chat_template() {
        let b = ScriptedBackend::new(crate::backend::ScriptBundle {
            default: vec![crate::backend::ScriptTurn::Checked {
                text: "Rating: [Relevant]".into(),
                expect: "### Question: my question".into(),
            }],
            runs: Default::default(),
        });
        let mut s = b.session("run").unwrap();
        critique_retrieval(&mut *s, "my question", "my evidence").unwrap();
    }
}

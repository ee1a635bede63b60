//! Prompt templates for probing and caption generation.

use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::matcher::option_letter;

pub const CAPTION_GENERATION_PROMPT: &str = "Your task is to generate a detailed caption of this image. You should not reveal if you know who are the characters / what movie this is from. You need to make an unbiased caption generation, writing at most a single paragraph. Start the answer with 'The image depicts' ...";

/// Second-pass instruction used when rule-based extraction gives up.
pub const TITLE_EXTRACTION_PROMPT: &str = "The following text is a model's answer to the question of which movie an image comes from. Extract only the movie name it gives, with no other words. If it names no movie, answer NONE.";

const DEFAULT_IMAGE: &str = "The following image is a frame from a certain scene from a certain movie.\nCan you name the movie?\nHere you should make your guess for the movie in the image. Your guess must be only the movie name.";
const DEFAULT_IMAGES: &str = "The following {n} images are frames from a certain movie.\nCan you name the movie?\nHere you should make your guess for the movie in the images. Your guess must be only the movie name.";
const DEFAULT_CAPTION: &str = "The following caption describes a scene from a certain movie.\nCan you name the movie?\nHere you should make your guess for the movie in the image based on the caption. Your guess must be only the movie name.\n\n{caption}";
const DEFAULT_MCQA: &str = "Question: The following image is a frame from a certain scene from a certain movie.\nWhich of the following 4 options is the movie of this frame?\n\nOptions:\n{options}";

/// One registered set of templates. `{n}`, `{caption}` and `{options}` are
/// substituted at render time; every rendered prompt ends with `Answer:`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub id: String,
    pub freeform_image: String,
    pub freeform_images: String,
    pub freeform_caption: String,
    pub mcqa_image: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            id: "default".into(),
            freeform_image: DEFAULT_IMAGE.into(),
            freeform_images: DEFAULT_IMAGES.into(),
            freeform_caption: DEFAULT_CAPTION.into(),
            mcqa_image: DEFAULT_MCQA.into(),
        }
    }
}

impl PromptSet {
    /// Same task, reworded.
    pub fn paraphrased() -> Self {
        Self {
            id: "paraphrased".into(),
            freeform_image: "Can you identify the movie shown in this image?\nYour guess must be only the movie name.".into(),
            freeform_images: "Can you identify the movie shown in these {n} images?\nYour guess must be only the movie name.".into(),
            ..Self::default()
        }
    }

    /// Carries a hint about the title, which inflates accuracy.
    pub fn easier() -> Self {
        Self {
            id: "easier".into(),
            freeform_image: "What Oscar-winning movie is this frame from?\nYour guess must be only the movie name.".into(),
            freeform_images: "What Oscar-winning movie are these {n} frames from?\nYour guess must be only the movie name.".into(),
            ..Self::default()
        }
    }

    pub fn builtin() -> [PromptSet; 3] {
        [Self::default(), Self::paraphrased(), Self::easier()]
    }

    pub fn image_prompt(&self, n_images: usize) -> String {
        let body = if n_images <= 1 {
            self.freeform_image.clone()
        } else {
            self.freeform_images.replace("{n}", &format!("{n_images}"))
        };
        with_answer_cue(body)
    }

    pub fn caption_prompt(&self, caption: &str) -> String {
        with_answer_cue(self.freeform_caption.replace("{caption}", caption.trim()))
    }

    pub fn mcqa_prompt(&self, options: &[String]) -> String {
        let mut listed = String::new();
        for (i, option) in options.iter().enumerate() {
            listed.push_str(&format!("{}. {}\n", option_letter(i), option));
        }
        with_answer_cue(self.mcqa_image.replace("{options}", listed.trim_end()))
    }
}

fn with_answer_cue(mut body: String) -> String {
    body.push_str("\n\nAnswer:");
    body
}

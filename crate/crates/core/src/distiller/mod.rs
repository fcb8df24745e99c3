//! Teacher training and uni-level distillation against the frozen teacher.

mod engine;
mod loss;
mod teacher;

pub use engine::{
    distill, distill_from_train, recalibrate_labels, DistillConfig, Distillation, Grouping, IterationLog, Observer, StepView,
    RUN_LOG_HEADER,
};
pub use loss::{distill_loss, regularization_loss, LossTerms};
pub use teacher::{train_teacher, TeacherTrainConfig, TrainedTeacher};

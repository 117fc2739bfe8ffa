"""
Optimization: overall loss, SGD with momentum, teacher and student training loops.
"""
from .optimizer import OptimizerState, sgd_step, step_decay_epochs
from .objective import LossBreakdown, total_loss, loss_breakdown
from .prefetch import map_bounded, prefetch, thread_budget
from .run_log import RunLog, read_metrics
from .teacher_training import TeacherRunConfig, TeacherResult, train_teacher, load_teacher
from .student_training import TrainRunConfig, StudentResult, train_student, load_student, batch_losses

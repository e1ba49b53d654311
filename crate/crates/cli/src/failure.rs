use std::fmt::Display;
use std::process::ExitCode;

use twinkit_core::datagen::GenError;
use twinkit_core::evalstats::FidelityError;
use twinkit_core::metalearn::artifact::ArtifactError;
use twinkit_core::metalearn::maml::TrainError;
use twinkit_core::twin::TwinError;
use twinkit_core::{FleetError, PrepError, SchemaError, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Model,
    Network,
}

impl Category {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Category::Usage => 2,
            Category::Data => 3,
            Category::Model => 4,
            Category::Network => 5,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Category::Usage => "usage error",
            Category::Data => "data error",
            Category::Model => "model error",
            Category::Network => "network error",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(category: Category, error: impl Into<anyhow::Error>) -> Self {
        Self {
            category,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl Display) -> Self {
        Self::new(Category::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl Display) -> Self {
        Self::new(Category::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn report(&self) {
        eprintln!("{}: {:#}", self.category.label(), self.error);
    }
}

pub type Outcome<T> = Result<T, Failure>;

/// Attaches a category and a context line to any error.
pub trait Categorize<T> {
    fn categorize(self, category: Category, ctx: impl Display) -> Outcome<T>;

    fn usage(self, ctx: impl Display) -> Outcome<T>
    where
        Self: Sized,
    {
        self.categorize(Category::Usage, ctx)
    }

    fn data(self, ctx: impl Display) -> Outcome<T>
    where
        Self: Sized,
    {
        self.categorize(Category::Data, ctx)
    }

    fn network(self, ctx: impl Display) -> Outcome<T>
    where
        Self: Sized,
    {
        self.categorize(Category::Network, ctx)
    }
}

impl<T, E> Categorize<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn categorize(self, category: Category, ctx: impl Display) -> Outcome<T> {
        self.map_err(|e| Failure::new(category, anyhow::Error::new(e).context(ctx.to_string())))
    }
}

/// Module errors that carry their own category.
pub trait Classified: std::error::Error + Send + Sync + Sized + 'static {
    fn category(&self) -> Category;
}

pub trait Classify<T> {
    fn classify(self, ctx: impl Display) -> Outcome<T>;
}

impl<T, E: Classified> Classify<T> for Result<T, E> {
    fn classify(self, ctx: impl Display) -> Outcome<T> {
        self.map_err(|e| {
            let c = e.category();
            Failure::new(c, anyhow::Error::new(e).context(ctx.to_string()))
        })
    }
}

impl Classified for GenError {
    fn category(&self) -> Category {
        match self {
            GenError::InvalidBudget(_) | GenError::EmptyBudget => Category::Usage,
            GenError::Unreachable { .. } => Category::Network,
            _ => Category::Data,
        }
    }
}

impl Classified for TransportError {
    fn category(&self) -> Category {
        Category::Network
    }
}

impl Classified for FidelityError {
    fn category(&self) -> Category {
        match self {
            FidelityError::NoRequests => Category::Usage,
            FidelityError::NothingCompleted(_) => Category::Network,
        }
    }
}

impl Classified for PrepError {
    fn category(&self) -> Category {
        Category::Data
    }
}

impl Classified for SchemaError {
    fn category(&self) -> Category {
        Category::Data
    }
}

impl Classified for ArtifactError {
    fn category(&self) -> Category {
        Category::Model
    }
}

impl Classified for TrainError {
    fn category(&self) -> Category {
        match self {
            TrainError::Task(_) => Category::Data,
            TrainError::Config(_) => Category::Usage,
            _ => Category::Model,
        }
    }
}

impl Classified for TwinError {
    fn category(&self) -> Category {
        match self {
            TwinError::BadSerial { .. } | TwinError::DuplicateSerial(_) | TwinError::MissingDevice(_) => Category::Usage,
            TwinError::FeatureMismatch { .. } => Category::Model,
            TwinError::State { .. } => Category::Data,
        }
    }
}

impl Classified for FleetError {
    fn category(&self) -> Category {
        match self {
            FleetError::Config(_) | FleetError::DuplicateSerial(_) => Category::Data,
            FleetError::Bind { .. } => Category::Network,
            FleetError::Entry { .. } => Category::Model,
        }
    }
}

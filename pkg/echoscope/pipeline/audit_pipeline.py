import sys
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from echoscope.logging.logger import get_logger
from echoscope.exception.exception import EchoscopeError, EchoscopeException, UsageError
from echoscope.constants import CLASSIFICATION_REPORT_NAME
from echoscope.entity.artifact_entity import (
    AnalysisArtifact,
    ClassificationArtifact,
    PolicyArtifact,
    SimulationArtifact,
)
from echoscope.entity.channel_entity import ChannelClassification
from echoscope.entity.config_entity import CaptureConfig, ClassifierConfig, SimulationConfig
from echoscope.entity.flow_entity import FlowRecord
from echoscope.entity.policy_entity import Policy
from echoscope.components.capture_ingest import CaptureIngestion, load_flow_table, mirror_path_for
from echoscope.components.channel_classifier import ChannelClassifier, load_classification_report
from echoscope.components.attack_policy import PolicyDerivation, load_policy
from echoscope.components.shaper_sim import ShaperSimulator
from echoscope.utils.data_validation import resolve_stage_input

logger = get_logger(__name__)

FlowInput = Union[str, Path, pd.DataFrame, List[FlowRecord], None]


class AuditPipeline:
    """
    Audit pipeline orchestrator.
    Capture -> flow report -> classification -> attack policy -> simulation.
    Each stage also accepts the previous stage's file output.
    """

    def __init__(
        self,
        capture_config: Optional[CaptureConfig] = None,
        classifier_config: Optional[ClassifierConfig] = None,
        simulation_config: Optional[SimulationConfig] = None
    ):
        logger.info("=" * 60)
        logger.info("INITIALIZING AUDIT PIPELINE")
        logger.info("=" * 60)
        self.capture_config = capture_config
        self.classifier_config = classifier_config
        self.simulation_config = simulation_config

        self.flows: Optional[List[FlowRecord]] = None
        self.classifications: Optional[List[ChannelClassification]] = None
        self.policy: Optional[Policy] = None
        self.analysis_artifact: Optional[AnalysisArtifact] = None
        self.classification_artifact: Optional[ClassificationArtifact] = None
        self.policy_artifact: Optional[PolicyArtifact] = None
        self.simulation_artifact: Optional[SimulationArtifact] = None

    # ------------------------------------------------------------- configs

    def _capture_config(self) -> CaptureConfig:
        if self.capture_config is None:
            self.capture_config = CaptureConfig.from_yaml()
        return self.capture_config

    def _classifier_config(self) -> ClassifierConfig:
        if self.classifier_config is None:
            self.classifier_config = ClassifierConfig.from_yaml()
        return self.classifier_config

    def _simulation_config(self) -> SimulationConfig:
        if self.simulation_config is None:
            self.simulation_config = SimulationConfig.from_yaml()
        return self.simulation_config

    # -------------------------------------------------------------- stages

    def start_analysis(
        self,
        capture_path: Union[str, Path],
        report_path: Optional[Union[str, Path]] = None
    ) -> AnalysisArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STAGE 1: CAPTURE ANALYSIS")
            logger.info("=" * 60)

            ingestion = CaptureIngestion(config=self._capture_config())
            self.analysis_artifact = ingestion.initiate_capture_ingestion(capture_path, report_path)
            self.flows = ingestion.flows
            logger.info(f"Report saved at: {self.analysis_artifact.report_path}")
            return self.analysis_artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Capture analysis stage failed")
            raise EchoscopeException(e, sys)

    def _flow_input(self, flows: FlowInput) -> Union[pd.DataFrame, List[FlowRecord]]:
        if flows is None:
            if self.flows is None:
                raise UsageError("classification needs flows: run the analysis stage or pass a report")
            return self.flows
        if isinstance(flows, (pd.DataFrame, list)):
            return flows

        kind, path = resolve_stage_input(flows)
        if kind == "capture":
            self.start_analysis(path)
            return self.flows
        if kind == "flow_table":
            mirror = mirror_path_for(path)
            if path.suffix.lower() == ".csv" and mirror.is_file():
                logger.info(f"Using JSON-lines mirror {mirror.name} (keeps absolute timestamps)")
                path = mirror
            return load_flow_table(path)
        raise UsageError(f"{path} is a classification report, classification needs a flow report or capture")

    def start_classification(
        self,
        flows: FlowInput = None,
        report_path: Optional[Union[str, Path]] = None
    ) -> ClassificationArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STAGE 2: CHANNEL CLASSIFICATION")
            logger.info("=" * 60)

            flow_input = self._flow_input(flows)
            classifier = ChannelClassifier(config=self._classifier_config())
            self.classification_artifact = classifier.initiate_classification(flow_input, report_path)
            self.classifications = classifier.classifications
            return self.classification_artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Channel classification stage failed")
            raise EchoscopeException(e, sys)

    def _classification_input(self, classifications) -> List[ChannelClassification]:
        if classifications is None:
            if self.classifications is None:
                raise UsageError("policy derivation needs classifications: run classification or pass a report")
            return self.classifications
        if isinstance(classifications, list):
            return classifications

        kind, path = resolve_stage_input(classifications)
        if kind == "classification":
            self.classifications = load_classification_report(path)
        else:
            self.start_classification(path)
        return self.classifications

    def start_policy(
        self,
        target: str,
        classifications: Union[str, Path, List[ChannelClassification], None] = None,
        policy_path: Optional[Union[str, Path]] = None,
        action: str = "block",
        scope: str = "always",
        rate: Optional[int] = None
    ) -> PolicyArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STAGE 3: ATTACK POLICY DERIVATION")
            logger.info("=" * 60)

            evidence = self._classification_input(classifications)
            derivation = PolicyDerivation(action=action, scope=scope, rate=rate)
            self.policy_artifact = derivation.initiate_policy_derivation(evidence, target, policy_path)
            self.policy = derivation.policy
            return self.policy_artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Policy derivation stage failed")
            raise EchoscopeException(e, sys)

    def start_simulation(
        self,
        policy: Union[str, Path, Policy, None] = None,
        scenario: str = "during",
        model: Optional[Union[str, Path]] = None,
        session_segments: Optional[int] = None,
        report_path: Optional[Union[str, Path]] = None
    ) -> SimulationArtifact:
        try:
            logger.info("=" * 60)
            logger.info("STAGE 4: SHAPER SIMULATION")
            logger.info("=" * 60)

            if policy is None:
                if self.policy is None:
                    raise UsageError("simulation needs a policy: run policy derivation or pass a policy file")
                policy = self.policy
            elif not isinstance(policy, Policy):
                policy = load_policy(policy)

            simulator = ShaperSimulator(
                config=self._simulation_config(),
                profiles=(self.classifier_config.profiles or None) if self.classifier_config else None,
            )
            self.simulation_artifact = simulator.initiate_simulation(
                policy, scenario, model=model, session_segments=session_segments, report_path=report_path
            )
            return self.simulation_artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Shaper simulation stage failed")
            raise EchoscopeException(e, sys)

    def run_table2(
        self,
        session_segments: Optional[int] = None,
        report_path: Optional[Union[str, Path]] = None
    ) -> SimulationArtifact:
        try:
            simulator = ShaperSimulator(config=self._simulation_config())
            self.simulation_artifact = simulator.run_table2(session_segments, report_path)
            return self.simulation_artifact

        except EchoscopeError:
            raise
        except Exception as e:
            logger.error("Outcome grid stage failed")
            raise EchoscopeException(e, sys)

    def run_pipeline(
        self,
        capture_path: Union[str, Path],
        target: str,
        output_dir: Union[str, Path],
        scenario: str = "during",
        action: str = "block",
        scope: str = "always",
        rate: Optional[int] = None
    ) -> Dict[str, object]:
        """
        All four stages in one process, writing every stage output under
        `output_dir` (report.csv, classification.json, policy.yaml,
        simulation.json).
        """
        try:
            logger.info("=" * 60)
            logger.info("STARTING COMPLETE AUDIT PIPELINE")
            logger.info("=" * 60)

            output_dir = Path(output_dir)
            analysis = self.start_analysis(capture_path, output_dir / "report.csv")
            classification = self.start_classification(self.flows, output_dir / CLASSIFICATION_REPORT_NAME)
            policy = self.start_policy(target, self.classifications, output_dir / "policy.yaml", action, scope, rate)
            simulation = self.start_simulation(self.policy, scenario, report_path=output_dir / "simulation.json")

            logger.info("=" * 60)
            logger.info("AUDIT PIPELINE COMPLETED SUCCESSFULLY")
            logger.info("=" * 60)
            return {
                "analysis": analysis,
                "classification": classification,
                "policy": policy,
                "simulation": simulation,
            }

        except EchoscopeError:
            logger.error("AUDIT PIPELINE FAILED")
            raise
        except Exception as e:
            logger.error("=" * 60)
            logger.error("AUDIT PIPELINE FAILED")
            logger.error("=" * 60)
            raise EchoscopeException(e, sys)

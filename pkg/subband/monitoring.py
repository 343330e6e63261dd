"""
Service de monitoring des expériences
Journal d'événements borné (sessions, essais, divergences) partagé par les services
"""

import threading
import time
import traceback
from collections import deque
from datetime import datetime
from typing import Dict, List, Optional
import logging

logger = logging.getLogger(__name__)

LEVELS = {'debug': logging.DEBUG, 'info': logging.INFO, 'warning': logging.WARNING, 'error': logging.ERROR}


class ExperimentMonitor:
    """Monitor singleton pour suivre le déroulement des expériences"""

    _instance = None
    _lock = threading.Lock()

    def __new__(cls):
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if not hasattr(self, 'initialized'):
            self.events = deque(maxlen=1000)  # Garder les 1000 derniers événements
            self.active_sessions = {}
            self.lock = threading.Lock()
            self.initialized = True

    def start_session(self, session_id: str, description: str, data: Dict = None):
        """Démarre une nouvelle session (une commande, un balayage...)"""
        with self.lock:
            self.active_sessions[session_id] = {
                'id': session_id,
                'description': description,
                'started_at': datetime.now(),
                'status': 'active',
                'events_count': 0,
            }
            self._add_event({
                'session_id': session_id,
                'type': 'session_start',
                'message': f'Nouvelle session: {description}',
                'level': 'info',
                'data': data or {},
            })

    def end_session(self, session_id: str, status: str = 'completed'):
        with self.lock:
            if session_id in self.active_sessions:
                self.active_sessions[session_id]['status'] = status
                self.active_sessions[session_id]['ended_at'] = datetime.now()
                self._add_event({
                    'session_id': session_id,
                    'type': 'session_end',
                    'message': f'Session terminée avec statut: {status}',
                    'level': 'info' if status == 'completed' else 'warning',
                    'data': {'status': status},
                })

    def log_event(self, session_id: str, source: str, action: str, message: str,
                  level: str = 'info', data: Dict = None):
        event = {
            'session_id': session_id,
            'type': 'event',
            'source': source,
            'action': action,
            'message': message,
            'level': level,
            'data': data or {},
        }
        with self.lock:
            if session_id in self.active_sessions:
                self.active_sessions[session_id]['events_count'] += 1
            self._add_event(event)

    def log_trial(self, session_id: str, source: str, algorithm: str, trial_seed: int,
                  diverged: bool = False, diverged_at: Optional[int] = None):
        """Log la fin d'un essai d'un algorithme"""
        if diverged:
            message = f'{algorithm}: divergence (graine {trial_seed}, itération {diverged_at})'
        else:
            message = f'{algorithm}: essai terminé (graine {trial_seed})'
        self.log_event(
            session_id=session_id,
            source=source,
            action='divergence' if diverged else 'trial',
            message=message,
            level='warning' if diverged else 'debug',
            data={'algorithm': algorithm, 'trial_seed': trial_seed, 'diverged_at': diverged_at},
        )

    def log_error(self, session_id: str, source: str, error_message: str,
                  exception_type: str = None, traceback_info: str = None):
        self.log_event(
            session_id=session_id,
            source=source,
            action='error',
            message=f'Erreur: {error_message}',
            level='error',
            data={'error_message': error_message, 'exception_type': exception_type, 'traceback': traceback_info},
        )

    def _add_event(self, event: Dict):
        event['timestamp'] = datetime.now().isoformat()
        self.events.append(event)
        logger.log(LEVELS.get(event['level'], logging.INFO), f"[{event['session_id']}] {event['message']}")

    def get_recent_events(self, limit: int = 100, session_id: str = None, level: str = None) -> List[Dict]:
        """Récupère les événements récents avec filtrage optionnel"""
        with self.lock:
            events = list(self.events)
        if session_id:
            events = [e for e in events if e.get('session_id') == session_id]
        if level:
            events = [e for e in events if e.get('level') == level]
        return events[-limit:]

    def get_session_stats(self, session_id: str) -> Dict:
        with self.lock:
            session = self.active_sessions.get(session_id)
            if not session:
                return {}
            session_events = [e for e in self.events if e.get('session_id') == session_id]
            stats = {
                'status': session['status'],
                'total_events': len(session_events),
                'events_by_action': {},
                'events_by_level': {},
            }
            for event in session_events:
                action = event.get('action', event.get('type', 'unknown'))
                stats['events_by_action'][action] = stats['events_by_action'].get(action, 0) + 1
                level = event.get('level', 'info')
                stats['events_by_level'][level] = stats['events_by_level'].get(level, 0) + 1
            ended = session.get('ended_at') or datetime.now()
            stats['duration_seconds'] = (ended - session['started_at']).total_seconds()
            return stats


# Instance globale du monitor
monitor = ExperimentMonitor()


class MonitoringMixin:
    """Mixin pour ajouter le monitoring aux services"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.monitor = monitor
        self.session_id = None

    def start_monitoring(self, description: str, data: Dict = None) -> str:
        self.session_id = f"{self.__class__.__name__}_{int(time.time() * 1000)}"
        self.monitor.start_session(self.session_id, description, data)
        return self.session_id

    def log_action(self, action: str, message: str, level: str = 'info', data: Dict = None):
        if self.session_id:
            self.monitor.log_event(self.session_id, self.__class__.__name__, action, message, level, data)

    def log_trials(self, result):
        """Une entrée par essai et par algorithme d'un EnsembleResult"""
        if not self.session_id:
            return
        for name, trials in result.trials.items():
            for series in trials:
                self.monitor.log_trial(self.session_id, self.__class__.__name__, name, series.trial_seed,
                                       diverged=series.diverged, diverged_at=series.diverged_at)

    def log_error(self, error_message: str, exception: Exception = None):
        if self.session_id:
            exception_type = None
            traceback_info = None
            if exception:
                exception_type = type(exception).__name__
                traceback_info = ''.join(traceback.format_exception(type(exception), exception,
                                                                    exception.__traceback__))
            self.monitor.log_error(self.session_id, self.__class__.__name__, error_message,
                                   exception_type, traceback_info)

    def end_monitoring(self, status: str = 'completed'):
        if self.session_id:
            self.monitor.end_session(self.session_id, status)
